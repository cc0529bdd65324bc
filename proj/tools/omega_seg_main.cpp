#include "omega/cli.hpp"

int main(int argc, char** argv) { return omega::run_cli(argc, argv); }

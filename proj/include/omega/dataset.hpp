#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "omega/phantom.hpp"

namespace omega {

struct DatasetEntry {
  int subject_id = 0;
  View view = View::kSA;
  int frame_id = 0;
  std::string image_path;  // relative to the dataset directory
  std::string label_path;
  RigidParams gt;
};

struct Dataset {
  std::string dir;
  int image_size = 64;
  int num_folds = 3;
  std::vector<DatasetEntry> entries;
  std::map<int, int> fold_of_subject;

  std::vector<std::size_t> fold_indices(int fold) const;
  std::vector<std::size_t> complement_indices(int fold) const;  // all entries not in `fold`
};

struct GenerateSpec {
  int subjects = 20;
  int sa_slices = 3;  // view slots per subject = sa_slices + 2 (HLA, VLA)
  int frames = 8;
  int size = 64;
  int folds = 3;
};

GenerateSpec desk_preset();
GenerateSpec paper_preset();

// Writes images/, labels/, manifest.csv, folds.csv and dataset.txt.
// Deterministic for a given (spec, seed); per-sample seeding keeps results
// independent of worker count.
void generate_dataset(const std::string& outdir, const GenerateSpec& spec, std::uint64_t seed);

Dataset load_dataset(const std::string& dir);

Sample load_sample(const Dataset& ds, const DatasetEntry& entry);

// 17-significant-digit decimal float, for byte-stable CSV output
std::string fmt17(double v);

}  // namespace omega

#include "omega/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "omega/pgm.hpp"

namespace fs = std::filesystem;

namespace omega {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

GenerateSpec desk_preset() { return GenerateSpec{20, 3, 8, 64, 3}; }
GenerateSpec paper_preset() { return GenerateSpec{20, 3, 8, 256, 3}; }

std::vector<std::size_t> Dataset::fold_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (fold_of_subject.at(entries[i].subject_id) == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::complement_indices(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (fold_of_subject.at(entries[i].subject_id) != fold) out.push_back(i);
  return out;
}

namespace {

struct Slot {
  View view;
  int slice;       // SA slice, 0 for long-axis views
  std::string tag; // filename fragment
};

std::vector<Slot> view_slots(int sa_slices) {
  std::vector<Slot> slots;
  for (int s = 0; s < sa_slices; ++s)
    slots.push_back({View::kSA, s, "SA" + std::to_string(s)});
  slots.push_back({View::kHLA, 0, "HLA"});
  slots.push_back({View::kVLA, 0, "VLA"});
  return slots;
}

}  // namespace

void generate_dataset(const std::string& outdir, const GenerateSpec& spec, std::uint64_t seed) {
  check(spec.subjects >= spec.folds, "generate_dataset: fewer subjects than folds");
  fs::create_directories(fs::path(outdir) / "images");
  fs::create_directories(fs::path(outdir) / "labels");

  const std::vector<Slot> slots = view_slots(spec.sa_slices);
  struct Row {
    int subject;
    std::size_t slot;
    int frame;
  };
  std::vector<Row> rows;
  for (int subj = 0; subj < spec.subjects; ++subj)
    for (std::size_t sl = 0; sl < slots.size(); ++sl)
      for (int f = 0; f < spec.frames; ++f) rows.push_back({subj, sl, f});

  std::vector<std::string> manifest_lines(rows.size());
#pragma omp parallel for schedule(dynamic)
  for (long ri = 0; ri < static_cast<long>(rows.size()); ++ri) {
    const Row& r = rows[static_cast<std::size_t>(ri)];
    const Slot& slot = slots[r.slot];
    const std::uint64_t subject_seed = stream_seed(seed, "subject", static_cast<std::uint64_t>(r.subject));
    Rng prng(stream_seed(seed, "data", static_cast<std::uint64_t>(r.subject), r.slot,
                         static_cast<std::uint64_t>(r.frame)));
    RigidParams p;
    p.tx = prng.uniform(-0.25, 0.25);
    p.ty = prng.uniform(-0.25, 0.25);
    p.theta = prng.uniform(-M_PI, M_PI);
    p.s = prng.uniform(0.5, 1.0);
    Sample sample = generate_phantom(subject_seed, slot.view, slot.slice, r.frame, p, spec.size);

    char name[64];
    std::snprintf(name, sizeof(name), "s%03d_%s_f%02d.pgm", r.subject, slot.tag.c_str(), r.frame);
    const std::string img_rel = std::string("images/") + name;
    const std::string lab_rel = std::string("labels/") + name;
    write_pgm16((fs::path(outdir) / img_rel).string(), sample.image);
    write_pgm8((fs::path(outdir) / lab_rel).string(), sample.labels);

    // SA slices share the view tag; the frame id keeps rows unique
    const int frame_id = (slot.view == View::kSA) ? slot.slice * spec.frames + r.frame : r.frame;
    std::ostringstream line;
    line << r.subject << "," << view_name(slot.view) << "," << frame_id << "," << img_rel << ","
         << lab_rel << "," << fmt17(p.tx) << "," << fmt17(p.ty) << "," << fmt17(p.theta) << ","
         << fmt17(p.s);
    manifest_lines[static_cast<std::size_t>(ri)] = line.str();
  }

  {
    std::ofstream mf(fs::path(outdir) / "manifest.csv");
    check(mf.good(), "generate_dataset: cannot write manifest");
    mf << "subject_id,view,frame_id,image_path,label_path,t_x,t_y,theta,s\n";
    for (const auto& l : manifest_lines) mf << l << "\n";
  }
  {
    const int per_subject = static_cast<int>(slots.size()) * spec.frames;
    std::vector<int> counts(static_cast<std::size_t>(spec.subjects), per_subject);
    std::vector<int> folds = partition_folds(counts, spec.folds, seed);
    std::ofstream ff(fs::path(outdir) / "folds.csv");
    check(ff.good(), "generate_dataset: cannot write folds");
    ff << "subject_id,fold\n";
    for (int subj = 0; subj < spec.subjects; ++subj)
      ff << subj << "," << folds[static_cast<std::size_t>(subj)] << "\n";
  }
  {
    std::ofstream meta(fs::path(outdir) / "dataset.txt");
    meta << "subjects=" << spec.subjects << "\nsa_slices=" << spec.sa_slices
         << "\nframes=" << spec.frames << "\nsize=" << spec.size << "\nfolds=" << spec.folds
         << "\nseed=" << seed << "\n";
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  {
    std::ifstream meta(fs::path(dir) / "dataset.txt");
    check(meta.good(), "load_dataset: missing dataset.txt in " + dir);
    std::string line;
    while (std::getline(meta, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq);
      const std::string val = line.substr(eq + 1);
      if (key == "size") ds.image_size = std::stoi(val);
      if (key == "folds") ds.num_folds = std::stoi(val);
    }
  }
  {
    std::ifstream mf(fs::path(dir) / "manifest.csv");
    check(mf.good(), "load_dataset: missing manifest.csv in " + dir);
    std::string line;
    std::getline(mf, line);  // header
    while (std::getline(mf, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string field;
      DatasetEntry e;
      std::getline(ss, field, ',');
      e.subject_id = std::stoi(field);
      std::getline(ss, field, ',');
      e.view = view_from_name(field);
      std::getline(ss, field, ',');
      e.frame_id = std::stoi(field);
      std::getline(ss, e.image_path, ',');
      std::getline(ss, e.label_path, ',');
      std::getline(ss, field, ',');
      e.gt.tx = std::stod(field);
      std::getline(ss, field, ',');
      e.gt.ty = std::stod(field);
      std::getline(ss, field, ',');
      e.gt.theta = std::stod(field);
      std::getline(ss, field, ',');
      e.gt.s = std::stod(field);
      ds.entries.push_back(std::move(e));
    }
  }
  {
    std::ifstream ff(fs::path(dir) / "folds.csv");
    check(ff.good(), "load_dataset: missing folds.csv in " + dir);
    std::string line;
    std::getline(ff, line);
    while (std::getline(ff, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      ds.fold_of_subject[std::stoi(line.substr(0, comma))] = std::stoi(line.substr(comma + 1));
    }
  }
  return ds;
}

Sample load_sample(const Dataset& ds, const DatasetEntry& entry) {
  Sample s;
  s.image = read_pgm16((fs::path(ds.dir) / entry.image_path).string());
  s.labels = read_pgm8((fs::path(ds.dir) / entry.label_path).string());
  s.gt = entry.gt;
  s.view = entry.view;
  s.subject_id = entry.subject_id;
  s.frame_id = entry.frame_id;
  return s;
}

}  // namespace omega

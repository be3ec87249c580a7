#pragma once

// A dataset directory:
//   images/<name>.ppm, landmarks/<name>.pts, labels.csv, manifest.txt

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "auhm/codec.hpp"
#include "auhm/io.hpp"
#include "auhm/parallel.hpp"
#include "auhm/synth.hpp"

namespace auhm {

struct Sample {
  std::string name;
  Rgb8Image image;
  LandmarkSet landmarks;
  AuLabels labels;
};

struct Dataset {
  std::vector<int> au_ids;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }

  /// Label column of AU `a` (position in au_ids).
  std::vector<double> labels_of(std::size_t a) const {
    std::vector<double> out;
    for (const auto& s : samples) out.push_back(s.labels[a]);
    return out;
  }
};

struct Manifest {
  int generator_version = synth::kGeneratorVersion;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<std::string> files;
};

inline std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06zu", i);
  return buf;
}

inline std::string encode_manifest(const Manifest& m) {
  std::string out = "generator=auhm-synth\ngenerator_version=" + std::to_string(m.generator_version) +
                    "\nseed=" + std::to_string(m.seed) + "\nn=" + std::to_string(m.n) + "\n\n";
  for (const auto& f : m.files) out += f + "\n";
  return out;
}

/// In-memory synthetic dataset; sample i uses sample_seed(seed, i).
inline Dataset synthesize(std::size_t n, std::uint64_t seed, const synth::SynthConfig& cfg = {},
                          std::size_t workers = worker_count()) {
  if (n == 0) throw ConfigError("dataset size must be >= 1");
  Dataset ds;
  ds.au_ids = au_ids(default_au_specs());
  ds.samples.resize(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        auto s = synth::generate_sample(synth::sample_seed(seed, i), std::nullopt, cfg);
        ds.samples[i] = {sample_name(i), to_rgb8(s.image), s.landmarks, s.labels};
      },
      workers);
  return ds;
}

inline Manifest write_dataset(const Dataset& ds, const std::filesystem::path& dir, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  std::filesystem::create_directories(dir / "landmarks", ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  Manifest m;
  m.seed = seed;
  m.n = ds.size();
  io::LabelTable table{ds.au_ids, {}};
  for (const auto& s : ds.samples) {
    io::write_ppm(dir / "images" / (s.name + ".ppm"), s.image);
    io::write_landmarks(dir / "landmarks" / (s.name + ".pts"), s.landmarks);
    table.rows.push_back({s.name + ".ppm", s.labels});
    m.files.push_back("images/" + s.name + ".ppm");
    m.files.push_back("landmarks/" + s.name + ".pts");
  }
  io::write_file(dir / "labels.csv", io::encode_labels_csv(table));
  m.files.push_back("labels.csv");
  io::write_file(dir / "manifest.txt", encode_manifest(m));
  return m;
}

inline Manifest generate_dataset(std::size_t n, std::uint64_t seed, const std::filesystem::path& dir,
                                 const synth::SynthConfig& cfg = {}) {
  return write_dataset(synthesize(n, seed, cfg), dir, seed);
}

inline Dataset load_dataset(const std::filesystem::path& dir, std::size_t workers = worker_count()) {
  const auto csv = dir / "labels.csv";
  const auto table = io::decode_labels_csv(io::read_file(csv), csv.string());
  Dataset ds;
  ds.au_ids = table.au_ids;
  ds.samples.resize(table.rows.size());
  parallel_for(
      table.rows.size(),
      [&](std::size_t i) {
        const auto& row = table.rows[i];
        const std::string stem = std::filesystem::path(row.file).stem().string();
        Sample& s = ds.samples[i];
        s.name = stem;
        s.image = io::read_ppm(dir / "images" / row.file);
        s.landmarks = io::read_landmarks(dir / "landmarks" / (stem + ".pts"));
        s.labels = row.labels;
      },
      workers);
  if (ds.samples.empty()) throw FormatError("dataset '" + dir.string() + "' has no samples");
  return ds;
}

}  // namespace auhm

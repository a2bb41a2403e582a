#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dime/simulator.hpp"
#include "dime/train.hpp"

namespace dime {

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetHeader {
  int version = kDatasetFormatVersion;
  std::string rig_hash;
  int image_width = 4032;
  int image_height = 3024;
  IntrinsicsD kc;
  /// Simulator settings that produced the frames, when simulated.
  std::optional<SimConfig> simulator;
  std::optional<std::uint64_t> seed;

  bool operator==(const DatasetHeader&) const;
};

struct DatasetFrame {
  CorrespondenceSet corrs;
  std::optional<IntrinsicsD> k_true;
  std::optional<NoiseRecord> noise;

  bool operator==(const DatasetFrame&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<DatasetFrame> frames;

  bool operator==(const Dataset&) const = default;
  void validate() const;
  std::vector<TrainSample> samples() const;
};

/// JSON document; doubles are written in shortest round-trip form.
std::string dataset_to_json(const Dataset& d);
/// ParseError carries the byte offset as its index and the line and column in its message.
Dataset dataset_from_json(const std::string& text);
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

struct SimulateRequest {
  int frames = 200;
  std::uint64_t seed = 0;
  SimConfig sim;
  double sigma_2d = 0.0;
  double sigma_3d = 0.0;
  /// Correspondences kept per frame (0 keeps all).
  int keep = 0;
};

/// K_c from sim.prior_seed; frame i from stream i of the seed.
Dataset simulate_dataset(const SimulateRequest& request);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dime

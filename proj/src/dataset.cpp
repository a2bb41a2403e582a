#include "dime/dataset.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dime/error.hpp"

namespace dime {

using nlohmann::json;

namespace {

json intrinsics_json(const IntrinsicsD& k) { return json::array({k.fx, k.fy, k.cx, k.cy}); }

IntrinsicsD intrinsics_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 4) throw Error(ErrorCode::kParseError, "intrinsics need 4 entries");
  return IntrinsicsD{v[0], v[1], v[2], v[3]};
}

json sim_json(const SimConfig& c) {
  return {{"image_width", c.image_width},
          {"image_height", c.image_height},
          {"nominal", intrinsics_json(c.nominal)},
          {"tilt_max", c.manifold.tilt_max},
          {"shift_max", c.manifold.shift_max},
          {"gain", c.manifold.gain},
          {"z0", c.manifold.z0},
          {"shell_min", c.shell_min},
          {"shell_max", c.shell_max},
          {"view_cone", c.view_cone},
          {"look_at_jitter", c.look_at_jitter},
          {"roll_max", c.roll_max},
          {"border_margin", c.border_margin},
          {"max_retries", c.max_retries},
          {"prior_samples", c.prior_samples},
          {"prior_seed", c.prior_seed}};
}

SimConfig sim_from(const json& j) {
  SimConfig c;
  c.image_width = j.at("image_width").get<int>();
  c.image_height = j.at("image_height").get<int>();
  c.nominal = intrinsics_from(j.at("nominal"));
  c.manifold.tilt_max = j.at("tilt_max").get<double>();
  c.manifold.shift_max = j.at("shift_max").get<double>();
  c.manifold.gain = j.at("gain").get<double>();
  c.manifold.z0 = j.at("z0").get<double>();
  c.shell_min = j.at("shell_min").get<double>();
  c.shell_max = j.at("shell_max").get<double>();
  c.view_cone = j.at("view_cone").get<double>();
  c.look_at_jitter = j.at("look_at_jitter").get<double>();
  c.roll_max = j.at("roll_max").get<double>();
  c.border_margin = j.at("border_margin").get<double>();
  c.max_retries = j.at("max_retries").get<int>();
  c.prior_samples = j.at("prior_samples").get<int>();
  c.prior_seed = j.at("prior_seed").get<std::uint64_t>();
  return c;
}

bool same_sim(const SimConfig& a, const SimConfig& b) { return sim_json(a) == sim_json(b); }

std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

}  // namespace

bool DatasetHeader::operator==(const DatasetHeader& o) const {
  if (simulator.has_value() != o.simulator.has_value()) return false;
  if (simulator && !same_sim(*simulator, *o.simulator)) return false;
  return version == o.version && rig_hash == o.rig_hash && image_width == o.image_width &&
         image_height == o.image_height && kc == o.kc && seed == o.seed;
}

void Dataset::validate() const {
  if (!header.kc.valid()) throw Error(ErrorCode::kInvalidArgument, "header K_c needs positive focal lengths");
  if (header.image_width < 1 || header.image_height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].corrs.empty()) throw Error(ErrorCode::kInvalidArgument, "frame has no correspondences", i);
  }
}

std::vector<TrainSample> Dataset::samples() const {
  std::vector<TrainSample> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back({f.corrs, header.kc, f.k_true});
  return out;
}

std::string dataset_to_json(const Dataset& d) {
  d.validate();
  json header = {{"version", d.header.version},
                 {"rig_hash", d.header.rig_hash},
                 {"image_width", d.header.image_width},
                 {"image_height", d.header.image_height},
                 {"kc", intrinsics_json(d.header.kc)}};
  if (d.header.simulator) header["simulator"] = sim_json(*d.header.simulator);
  if (d.header.seed) header["seed"] = *d.header.seed;
  json frames = json::array();
  for (const auto& f : d.frames) {
    json corrs = json::array();
    for (const auto& c : f.corrs) {
      corrs.push_back({c.pixel.x(), c.pixel.y(), c.point.x(), c.point.y(), c.point.z()});
    }
    json frame = {{"corrs", std::move(corrs)}};
    if (f.k_true) frame["k_true"] = intrinsics_json(*f.k_true);
    if (f.noise) {
      frame["noise"] = {{"sigma_2d", f.noise->sigma_2d}, {"sigma_3d", f.noise->sigma_3d}, {"keep", f.noise->keep}};
    }
    frames.push_back(std::move(frame));
  }
  json j = {{"format", "dime-dataset"}, {"header", std::move(header)}, {"frames", std::move(frames)}};
  return j.dump(1);
}

Dataset dataset_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, position(text, e.byte) + ": " + e.what(), e.byte);
  }
  Dataset d;
  try {
    if (!j.is_object() || j.value("format", "") != "dime-dataset") {
      throw Error(ErrorCode::kParseError, "not a dataset file");
    }
    const json& h = j.at("header");
    d.header.version = h.at("version").get<int>();
    if (d.header.version != kDatasetFormatVersion) {
      throw Error(ErrorCode::kVersionMismatch, "unsupported dataset version " + std::to_string(d.header.version));
    }
    d.header.rig_hash = h.at("rig_hash").get<std::string>();
    d.header.image_width = h.at("image_width").get<int>();
    d.header.image_height = h.at("image_height").get<int>();
    d.header.kc = intrinsics_from(h.at("kc"));
    if (h.contains("simulator")) d.header.simulator = sim_from(h.at("simulator"));
    if (h.contains("seed")) d.header.seed = h.at("seed").get<std::uint64_t>();
    if (j.contains("frames")) {
      for (const auto& fj : j.at("frames")) {
        DatasetFrame f;
        for (const auto& c : fj.at("corrs")) {
          const auto v = c.get<std::vector<double>>();
          if (v.size() != 5) throw Error(ErrorCode::kParseError, "correspondence needs x, y, X, Y, Z", d.frames.size());
          f.corrs.push_back({Eigen::Vector2d(v[0], v[1]), Eigen::Vector3d(v[2], v[3], v[4])});
        }
        if (fj.contains("k_true")) f.k_true = intrinsics_from(fj.at("k_true"));
        if (fj.contains("noise")) {
          const json& n = fj.at("noise");
          f.noise = NoiseRecord{n.at("sigma_2d").get<double>(), n.at("sigma_3d").get<double>(), n.at("keep").get<int>()};
        }
        d.frames.push_back(std::move(f));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
  try {
    d.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParseError, e.what(), e.index());
  }
  return d;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

void write_dataset(const Dataset& d, const std::string& path) { write_text_file(path, dataset_to_json(d) + "\n"); }

Dataset read_dataset(const std::string& path) { return dataset_from_json(read_text_file(path)); }

Dataset simulate_dataset(const SimulateRequest& request) {
  if (request.frames < 0) throw Error(ErrorCode::kInvalidArgument, "frame count must be non-negative");
  if (request.sigma_2d < 0.0 || request.sigma_3d < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise sigmas must be non-negative");
  }
  const RigSpec rig = RigSpec::standard();
  if (request.keep < 0 || request.keep > rig.vertex_count()) {
    throw Error(ErrorCode::kInvalidKeep, "keep must lie in [0, " + std::to_string(rig.vertex_count()) + "]");
  }
  Dataset d;
  std::mt19937_64 prior_rng(request.sim.prior_seed);
  d.header.kc = average_intrinsics(request.sim.nominal, request.sim.manifold, request.sim.prior_samples, prior_rng);
  d.header.rig_hash = rig.hash();
  d.header.image_width = request.sim.image_width;
  d.header.image_height = request.sim.image_height;
  d.header.simulator = request.sim;
  d.header.seed = request.seed;
  for (int i = 0; i < request.frames; ++i) {
    std::mt19937_64 rng(derive_seed(request.seed, static_cast<std::uint64_t>(i)));
    SimFrame f = sample_frame(rig, d.header.kc, request.sim, rng);
    if (request.sigma_2d > 0.0 || request.sigma_3d > 0.0) f = inject_noise(f, request.sigma_2d, request.sigma_3d, rng);
    if (request.keep > 0) f = drop_points(f, request.keep, rng);
    d.frames.push_back({f.corrs, f.k_true, f.noise});
  }
  return d;
}

}  // namespace dime

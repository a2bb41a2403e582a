#include <cstdio>
#include <filesystem>

#include <gtest/gtest.h>

#include "dime/dataset.hpp"
#include "dime/error.hpp"

namespace dime {
namespace {

Dataset small_dataset() {
  SimulateRequest req;
  req.frames = 3;
  req.seed = 42;
  req.sigma_2d = 0.5;
  req.sigma_3d = 0.01;
  req.keep = 100;
  return simulate_dataset(req);
}

ErrorCode parse_code(const std::string& text) {
  try {
    dataset_from_json(text);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIoError;
}

TEST(Dataset, RoundTripIsExact) {
  Dataset d = small_dataset();
  d.frames[1].k_true.reset();
  d.frames[2].noise.reset();
  d.frames[0].corrs[0].pixel.x() = 0.1 + 0.2;
  d.frames[0].corrs[0].point.z() = 1e-300;
  d.frames[0].corrs[1].point.y() = -123456789.123456789;
  const Dataset back = dataset_from_json(dataset_to_json(d));
  EXPECT_EQ(back, d);
  EXPECT_EQ(dataset_to_json(back), dataset_to_json(d));
}

TEST(Dataset, FileRoundTrip) {
  const Dataset d = small_dataset();
  const std::string path = (std::filesystem::temp_directory_path() / "dime_dataset_test.json").string();
  write_dataset(d, path);
  EXPECT_EQ(read_dataset(path), d);
  std::remove(path.c_str());
  try {
    read_dataset(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
  }
}

TEST(Dataset, TruncatedFileIsParseErrorWithPosition) {
  const std::string text = dataset_to_json(small_dataset());
  const std::string cut = text.substr(0, text.size() / 2);
  try {
    dataset_from_json(cut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    ASSERT_TRUE(e.index().has_value());
    EXPECT_EQ(*e.index(), cut.size() + 1);
    EXPECT_NE(std::string(e.what()).find("line "), std::string::npos);
  }
  try {
    dataset_from_json("{\n  \"format\": \"dime-dataset\",\n  oops\n}");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3, column 4"), std::string::npos) << e.what();
  }
}

TEST(Dataset, HeaderOnlyIsValidEmptyDataset) {
  const std::string text =
      R"({"format": "dime-dataset", "header": {"version": 1, "rig_hash": "abc", "image_width": 4032,
          "image_height": 3024, "kc": [3000, 3000, 2016, 1512]}})";
  const Dataset d = dataset_from_json(text);
  EXPECT_TRUE(d.frames.empty());
  EXPECT_EQ(d.header.kc, (IntrinsicsD{3000, 3000, 2016, 1512}));
  EXPECT_FALSE(d.header.simulator.has_value());
  EXPECT_EQ(dataset_from_json(dataset_to_json(d)), d);
}

TEST(Dataset, RejectsMalformedContent) {
  const std::string header =
      R"("header": {"version": 1, "rig_hash": "abc", "image_width": 4032, "image_height": 3024,
          "kc": [3000, 3000, 2016, 1512]})";
  EXPECT_EQ(parse_code(R"({"format": "dime-dataset", "header": {"version": 2, "rig_hash": "", "image_width": 1,
                           "image_height": 1, "kc": [1, 1, 0, 0]}})"),
            ErrorCode::kVersionMismatch);
  EXPECT_EQ(parse_code(R"({"format": "dime-mlp"})"), ErrorCode::kParseError);
  EXPECT_EQ(parse_code("[1, 2]"), ErrorCode::kParseError);
  EXPECT_EQ(parse_code("{\"format\": \"dime-dataset\", " + header + ", \"frames\": [{\"corrs\": []}]}"),
            ErrorCode::kParseError);
  EXPECT_EQ(parse_code("{\"format\": \"dime-dataset\", " + header + ", \"frames\": [{\"corrs\": [[1, 2, 3]]}]}"),
            ErrorCode::kParseError);
  EXPECT_EQ(parse_code(R"({"format": "dime-dataset", "header": {"version": 1}})"), ErrorCode::kParseError);
}

TEST(SimulateDataset, DeterministicAndRecordsProtocol) {
  const Dataset a = small_dataset();
  EXPECT_EQ(a, small_dataset());
  EXPECT_EQ(a.header.rig_hash, RigSpec::standard().hash());
  ASSERT_TRUE(a.header.seed.has_value());
  EXPECT_EQ(*a.header.seed, 42u);
  ASSERT_EQ(a.frames.size(), 3u);
  for (const auto& f : a.frames) {
    EXPECT_EQ(f.corrs.size(), 100u);
    ASSERT_TRUE(f.noise.has_value());
    EXPECT_EQ(*f.noise, (NoiseRecord{0.5, 0.01, 100}));
    ASSERT_TRUE(f.k_true.has_value());
  }
  SimulateRequest other;
  other.frames = 3;
  other.seed = 43;
  const Dataset b = simulate_dataset(other);
  EXPECT_NE(b.frames[0].corrs, a.frames[0].corrs);
  EXPECT_EQ(b.header.kc, a.header.kc);
  other.sim.prior_seed = 1;
  EXPECT_NE(simulate_dataset(other).header.kc, a.header.kc);

  // Frame i only depends on its own stream, so a longer run extends a shorter one.
  SimulateRequest longer;
  longer.frames = 4;
  longer.seed = 7;
  SimulateRequest shorter = longer;
  shorter.frames = 2;
  const Dataset l = simulate_dataset(longer);
  const Dataset s = simulate_dataset(shorter);
  EXPECT_EQ(l.frames[1], s.frames[1]);
  EXPECT_EQ(l.header.kc, s.header.kc);
}

TEST(SimulateDataset, RejectsBadRequests) {
  SimulateRequest req;
  req.frames = 1;
  req.keep = 321;
  EXPECT_THROW(simulate_dataset(req), Error);
  req.keep = 0;
  req.sigma_2d = -1.0;
  EXPECT_THROW(simulate_dataset(req), Error);
}

TEST(Dataset, SamplesCarryPriorAndTruth) {
  const Dataset d = small_dataset();
  const auto samples = d.samples();
  ASSERT_EQ(samples.size(), d.frames.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].kc, d.header.kc);
    EXPECT_EQ(samples[i].corrs, d.frames[i].corrs);
    EXPECT_EQ(samples[i].k_true, d.frames[i].k_true);
  }
}

}  // namespace
}  // namespace dime

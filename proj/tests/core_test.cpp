#include "reefdeploy/core.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace reefdeploy;

TEST(PatchClassTest, CodesAndStrings) {
  EXPECT_EQ(class_code(PatchClass::NoDeploy), 0);
  EXPECT_EQ(class_code(PatchClass::Coral), 1);
  EXPECT_EQ(class_code(PatchClass::Deploy), 2);
  EXPECT_EQ(to_string(PatchClass::Deploy), "deploy");
  EXPECT_EQ(to_string(PatchClass::Coral), "coral");
  EXPECT_EQ(patch_class_from_code(1), PatchClass::Coral);
  EXPECT_THROW(patch_class_from_code(3), std::invalid_argument);
  EXPECT_THROW(patch_class_from_code(-1), std::invalid_argument);
}

TEST(FrameLabelTest, Strings) {
  EXPECT_EQ(to_string(FrameLabel::Deploy), "deploy");
  EXPECT_EQ(to_string(FrameLabel::NoDeploy), "no_deploy");
  EXPECT_EQ(frame_label_from_string("deploy"), FrameLabel::Deploy);
  EXPECT_EQ(frame_label_from_string("no_deploy"), FrameLabel::NoDeploy);
  EXPECT_THROW(frame_label_from_string("maybe"), std::invalid_argument);
  EXPECT_EQ(frame_label_code(FrameLabel::Deploy), 1);
}

TEST(ClassDistributionTest, ValidConstruction) {
  const ClassDistribution d({0.2, 0.3, 0.5});
  EXPECT_DOUBLE_EQ(d[PatchClass::NoDeploy], 0.2);
  EXPECT_DOUBLE_EQ(d[2], 0.5);
  EXPECT_EQ(d.argmax(), PatchClass::Deploy);
}

TEST(ClassDistributionTest, RejectsBadMass) {
  EXPECT_THROW(ClassDistribution({0.5, 0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(ClassDistribution({-0.1, 0.6, 0.5}), std::invalid_argument);
  EXPECT_THROW(ClassDistribution({1.2, -0.1, -0.1}), std::invalid_argument);
  EXPECT_NO_THROW(ClassDistribution({0.2 + 4e-7, 0.3, 0.5}));
}

TEST(ClassDistributionTest, ArgmaxTieBreakPrefersLowestCode) {
  EXPECT_EQ(ClassDistribution({0.4, 0.4, 0.2}).argmax(), PatchClass::NoDeploy);
  EXPECT_EQ(ClassDistribution({0.3, 0.35, 0.35}).argmax(), PatchClass::Coral);
  EXPECT_EQ(ClassDistribution({1.0 / 3, 1.0 / 3, 1.0 / 3}).argmax(), PatchClass::NoDeploy);
}

TEST(SoftmaxTest, ClosedForms) {
  const std::vector<double> thirds = softmax(std::vector<double>{0.0, 0.0, 0.0});
  EXPECT_NEAR(thirds[0], 1.0 / 3, 1e-15);
  EXPECT_NEAR(thirds[1], 1.0 / 3, 1e-15);

  const std::vector<double> halves = softmax(std::vector<double>{std::log(2.0), 0.0, 0.0});
  EXPECT_NEAR(halves[0], 0.5, 1e-12);
  EXPECT_NEAR(halves[1], 0.25, 1e-12);
  EXPECT_NEAR(halves[2], 0.25, 1e-12);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  const std::vector<double> p = softmax(std::vector<double>{1000.0, 0.0, 0.0});
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  EXPECT_GE(p[1], 0.0);
  EXPECT_GE(p[2], 0.0);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
}

TEST(SoftmaxTest, ShiftInvariance) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a{dist(gen), dist(gen), dist(gen)};
    std::vector<double> b = a;
    const double shift = dist(gen);
    for (double& v : b) v += shift;
    const auto pa = softmax(a);
    const auto pb = softmax(b);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(pa[i], pb[i], 1e-9);
  }
}

TEST(SoftmaxTest, RejectsNonFinite) {
  EXPECT_THROW(softmax(std::vector<double>{1.0, std::nan(""), 0.0}), std::invalid_argument);
  EXPECT_THROW(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST(ClassDistributionTest, FromLogitsSumsToOneStrictlyPositive) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> dist(-30.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::vector<double> logits{dist(gen), dist(gen), dist(gen)};
    const ClassDistribution d = ClassDistribution::from_logits(logits);
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
      EXPECT_GT(d[c], 0.0);
      sum += d[c];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(GridSpecTest, DefaultIs4x7) {
  const GridSpec grid;
  EXPECT_EQ(grid.rows, 4);
  EXPECT_EQ(grid.cols, 7);
  EXPECT_EQ(grid.patch_count(), 28);
  EXPECT_THROW(validate(GridSpec{0, 7}), std::invalid_argument);
  EXPECT_THROW(validate(GridSpec{4, -1}), std::invalid_argument);
}

TEST(GeoPointTest, RangeValidation) {
  EXPECT_NO_THROW(validate(GeoPoint{-18.5, 147.0, 5.0}));
  EXPECT_THROW(validate(GeoPoint{-91.0, 0.0, {}}), std::invalid_argument);
  EXPECT_THROW(validate(GeoPoint{0.0, 180.5, {}}), std::invalid_argument);
  EXPECT_THROW(validate(GeoPoint{0.0, 0.0, -1.0}), std::invalid_argument);
}

TEST(FrameRecordTest, JsonRoundTrip) {
  FrameRecord r;
  r.frame_id = "f1";
  r.source = "img/f1.jpg";
  r.timestamp_ms = 1234;
  r.geo = GeoPoint{-18.25, 146.75, 8.2};
  r.ecologist_label = FrameLabel::Deploy;
  r.patch_labels = std::vector<PatchClass>(28, PatchClass::Coral);

  const FrameRecord back = frame_record_from_json(to_json(r));
  EXPECT_EQ(back.frame_id, r.frame_id);
  EXPECT_EQ(back.source, r.source);
  EXPECT_EQ(back.timestamp_ms, r.timestamp_ms);
  ASSERT_TRUE(back.geo.has_value());
  EXPECT_DOUBLE_EQ(back.geo->lat, -18.25);
  EXPECT_DOUBLE_EQ(back.geo->lon, 146.75);
  ASSERT_TRUE(back.geo->depth_m.has_value());
  EXPECT_DOUBLE_EQ(*back.geo->depth_m, 8.2);
  EXPECT_EQ(back.ecologist_label, FrameLabel::Deploy);
  ASSERT_TRUE(back.patch_labels.has_value());
  EXPECT_EQ(back.patch_labels->size(), 28u);
}

TEST(FrameRecordTest, LatitudeRequiresLongitude) {
  json obj{{"frame_id", "f"}, {"source", "s"}, {"lat", 1.0}};
  EXPECT_THROW(frame_record_from_json(obj), std::invalid_argument);
  json obj2{{"frame_id", "f"}, {"source", "s"}, {"depth_m", 3.0}};
  EXPECT_THROW(frame_record_from_json(obj2), std::invalid_argument);
}

namespace {

std::string manifest_line(const std::string& id, const std::string& label) {
  json obj{{"frame_id", id}, {"source", id + ".jpg"}};
  if (!label.empty()) obj["ecologist_label"] = label;
  return obj.dump() + "\n";
}

}  // namespace

TEST(ManifestTest, CountsFrameLabels) {
  testutil::TempDir dir;
  const auto path = dir.file("m.jsonl");
  testutil::write_file(path, manifest_line("a", "deploy") + manifest_line("b", "no_deploy") +
                                 manifest_line("c", "deploy"));
  const DatasetManifest m = load_manifest(path);
  EXPECT_EQ(m.records().size(), 3u);
  const auto counts = m.frame_label_counts();
  EXPECT_EQ(counts[frame_label_code(FrameLabel::NoDeploy)], 1u);
  EXPECT_EQ(counts[frame_label_code(FrameLabel::Deploy)], 2u);
  EXPECT_NE(m.find("b"), nullptr);
  EXPECT_EQ(m.find("zzz"), nullptr);
}

TEST(ManifestTest, EmptyFileGivesEmptyManifest) {
  testutil::TempDir dir;
  const auto path = dir.file("empty.jsonl");
  testutil::write_file(path, "");
  const DatasetManifest m = load_manifest(path);
  EXPECT_TRUE(m.records().empty());
  const auto patch_counts = m.patch_class_counts();
  EXPECT_EQ(patch_counts[0] + patch_counts[1] + patch_counts[2], 0u);
}

TEST(ManifestTest, WrongPatchLabelCountNamesFrame) {
  testutil::TempDir dir;
  const auto path = dir.file("bad.jsonl");
  json obj{{"frame_id", "short_frame"}, {"source", "s.jpg"},
           {"patch_labels", std::vector<int>(27, 0)}};
  testutil::write_file(path, obj.dump() + "\n");
  try {
    load_manifest(path);
    FAIL() << "expected validation error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("short_frame"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, DuplicateFrameIdRejected) {
  testutil::TempDir dir;
  const auto path = dir.file("dup.jsonl");
  testutil::write_file(path, manifest_line("a", "") + manifest_line("a", ""));
  EXPECT_THROW(load_manifest(path), std::exception);
}

TEST(ManifestTest, MalformedLineReportsLineNumber) {
  testutil::TempDir dir;
  const auto path = dir.file("mal.jsonl");
  testutil::write_file(path, manifest_line("a", "") + "{not json\n");
  try {
    load_manifest(path);
    FAIL() << "expected parse error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, ClassCountsAtPatchLevel) {
  testutil::TempDir dir;
  const auto path = dir.file("p.jsonl");
  json obj{{"frame_id", "f"}, {"source", "s.jpg"}, {"patch_labels", std::vector<int>{0, 0, 1, 2}}};
  testutil::write_file(path, obj.dump() + "\n");
  const DatasetManifest m = load_manifest(path, GridSpec{2, 2});
  const auto counts = class_counts(m, LabelLevel::Patch);
  EXPECT_EQ(counts, (std::vector<std::uint64_t>{2, 1, 1}));
}

TEST(ManifestTest, ClassCountsErrorsWhenLevelMissing) {
  testutil::TempDir dir;
  const auto path = dir.file("m.jsonl");
  testutil::write_file(path, manifest_line("a", "deploy"));
  const DatasetManifest m = load_manifest(path);
  EXPECT_NO_THROW(class_counts(m, LabelLevel::Frame));
  try {
    class_counts(m, LabelLevel::Patch);
    FAIL() << "expected missing-label error";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("no patch labels"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, SyntheticPatchCountsSumMatchesRecount) {
  testutil::TempDir dir;
  const auto path = dir.file("big.jsonl");
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> cls(0, 2);
  std::string body;
  std::vector<std::uint64_t> expected(3, 0);
  for (int f = 0; f < 100; ++f) {
    std::vector<int> labels(28);
    for (int& v : labels) {
      v = cls(gen);
      ++expected[static_cast<std::size_t>(v)];
    }
    body += json{{"frame_id", "f" + std::to_string(f)}, {"source", "x"}, {"patch_labels", labels}}
                .dump() +
            "\n";
  }
  testutil::write_file(path, body);
  const DatasetManifest m = load_manifest(path);
  const auto counts = class_counts(m, LabelLevel::Patch);
  EXPECT_EQ(counts, expected);
  EXPECT_EQ(counts[0] + counts[1] + counts[2], 2800u);
}

TEST(ManifestTest, WriteLoadRoundTrip) {
  testutil::TempDir dir;
  const auto path = dir.file("rt.jsonl");
  json line1{{"frame_id", "a"}, {"source", "a.jpg"}, {"timestamp_ms", 10},
             {"lat", -18.1}, {"lon", 147.2}, {"depth_m", 4.5}, {"ecologist_label", "deploy"}};
  json line2{{"frame_id", "b"}, {"source", "b.jpg"},
             {"patch_labels", std::vector<int>(28, 2)}};
  testutil::write_file(path, line1.dump() + "\n" + line2.dump() + "\n");
  const DatasetManifest m = load_manifest(path);
  const auto out = dir.file("rt_out.jsonl");
  write_manifest(m, out);
  const DatasetManifest again = load_manifest(out);
  ASSERT_EQ(again.records().size(), m.records().size());
  for (std::size_t i = 0; i < m.records().size(); ++i) {
    EXPECT_EQ(to_json(again.records()[i]), to_json(m.records()[i]));
  }
}

TEST(JsonlTest, AtomicWriteReplacesContent) {
  testutil::TempDir dir;
  const auto path = dir.file("x.txt");
  atomic_write_text(path, "first");
  atomic_write_text(path, "second");
  EXPECT_EQ(testutil::read_file(path), "second");
}

TEST(JsonlTest, ForEachSkipsBlankAndReportsBadLines) {
  testutil::TempDir dir;
  const auto path = dir.file("x.jsonl");
  testutil::write_file(path, "{\"a\":1}\n\n{\"b\":2}\r\n");
  int seen = 0;
  for_each_jsonl_line(path, [&](std::size_t, const json&) { ++seen; });
  EXPECT_EQ(seen, 2);
  const auto bad = dir.file("bad.jsonl");
  testutil::write_file(bad, "{\"a\":1}\nnope\n");
  try {
    for_each_jsonl_line(bad, [](std::size_t, const json&) {});
    FAIL() << "expected malformed-line error";
  } catch (const std::exception& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(":2"), std::string::npos) << what;
  }
}

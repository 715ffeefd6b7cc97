#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "irisseg/datasets.hpp"
#include "irisseg/errors.hpp"
#include "irisseg/preprocess.hpp"
#include "irisseg/synth.hpp"
#include "test_util.hpp"

using namespace irisseg;
namespace fs = std::filesystem;
using testing_util::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Mask disk_mask(int h, int w, int cx, int cy, int radius) {
  Mask m(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      m.set(r, c, (r - cy) * (r - cy) + (c - cx) * (c - cx) <= radius * radius);
  return m;
}

// Writes one image/mask pair per (identity, shot) with the given stems.
void write_pair(const fs::path& root, const std::string& stem, const std::string& mask_stem) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  cv::Mat img(24, 32, CV_8UC1, cv::Scalar(100));
  cv::imwrite((root / "images" / (stem + ".png")).string(), img);
  write_mask(disk_mask(24, 32, 16, 12, 5), root / "masks" / (mask_stem + ".png"));
}

}  // namespace

TEST(Split, FloorRuleOnIdentityCounts) {
  auto ids = [](int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("s" + std::to_string(1000 + i));
    return v;
  };
  EXPECT_EQ(train_identities(ids(10), 1, 0.8).size(), 8u);
  // Identity counts of the three public datasets and their reported train sizes.
  EXPECT_EQ(train_identities(ids(249), 1, 0.8).size(), 199u);
  EXPECT_EQ(train_identities(ids(346), 1, 0.8).size(), 276u);
  EXPECT_EQ(train_identities(ids(224), 1, 0.8).size(), 179u);
  EXPECT_EQ(train_identities(ids(1), 1, 0.5).size(), 1u);
  EXPECT_EQ(train_identities(ids(5), 1, 1.0).size(), 5u);
}

TEST(Split, SeededAndOrderIndependent) {
  std::vector<std::string> a, b;
  for (int i = 0; i < 30; ++i) a.push_back("id" + std::to_string(i));
  b.assign(a.rbegin(), a.rend());
  EXPECT_EQ(train_identities(a, 42, 0.8), train_identities(b, 42, 0.8));
  EXPECT_NE(train_identities(a, 42, 0.8), train_identities(a, 43, 0.8));
}

TEST(BuildManifest, CasiaLayoutPairsAndSplitsByIdentity) {
  TempDir dir;
  for (int s = 0; s < 10; ++s)
    for (int k = 1; k <= 3; ++k) {
      const std::string stem = "S10" + std::to_string(10 + s) + (s % 2 ? "L" : "R") + "0" +
                               std::to_string(k);
      write_pair(dir.path(), stem, stem);
    }
  const auto m = build_manifest(dir.path(), LayoutSpec::preset("casia"), 5, 0.8, "casia");
  EXPECT_EQ(m.records.size(), 30u);
  EXPECT_EQ(m.identity_count(Split::train), 8u);
  EXPECT_EQ(m.identity_count(Split::test), 2u);
  EXPECT_EQ(m.split(Split::train).size(), 24u);
  EXPECT_NO_THROW(check_identity_disjoint(m));
  std::set<std::string> train_ids;
  for (const auto& r : m.split(Split::train)) train_ids.insert(r.identity_id);
  for (const auto& r : m.split(Split::test)) EXPECT_FALSE(train_ids.count(r.identity_id));
}

TEST(BuildManifest, PresetsExtractIdentities) {
  TempDir nd, iitd;
  write_pair(nd.path(), "04267d227", "04267d227");
  write_pair(nd.path(), "04267d228", "04267d228");
  write_pair(nd.path(), "05101d1", "05101d1");
  const auto m = build_manifest(nd.path(), LayoutSpec::preset("nd"), 0, 0.5);
  std::set<std::string> ids;
  for (const auto& r : m.records) ids.insert(r.identity_id);
  EXPECT_EQ(ids, (std::set<std::string>{"04267", "05101"}));

  write_pair(iitd.path(), "008_07", "OperatorA_008_07");
  LayoutSpec layout = LayoutSpec::preset("iitd");
  layout.mask_prefix = "OperatorA_";
  const auto mi = build_manifest(iitd.path(), layout, 0, 0.8);
  ASSERT_EQ(mi.records.size(), 1u);
  EXPECT_EQ(mi.records[0].identity_id, "008");
  EXPECT_THROW(LayoutSpec::preset("ubiris"), UserError);
}

TEST(BuildManifest, ErrorPaths) {
  TempDir empty, dup;
  fs::create_directories(empty.path() / "images");
  EXPECT_THROW(build_manifest(empty.path(), LayoutSpec::preset("synth"), 0, 0.8), NoPairsFound);
  write_pair(dup.path(), "id1_1", "id1_1");
  cv::imwrite((dup.path() / "masks" / "id1_1.bmp").string(), cv::Mat(24, 32, CV_8UC1, cv::Scalar(255)));
  EXPECT_THROW(build_manifest(dup.path(), LayoutSpec::preset("synth"), 0, 0.8), DuplicateRecord);
  EXPECT_THROW(build_manifest(empty.path() / "missing", LayoutSpec::preset("synth"), 0, 0.8),
               UserError);
}

TEST(Manifest, SaveLoadRoundTripAndByteIdentical) {
  TempDir dir;
  for (int i = 0; i < 6; ++i) write_pair(dir.path(), "id" + std::to_string(i) + "_1", "id" + std::to_string(i) + "_1");
  const auto a = build_manifest(dir.path(), LayoutSpec::preset("synth"), 3, 0.8, "toy");
  const auto b = build_manifest(dir.path(), LayoutSpec::preset("synth"), 3, 0.8, "toy");
  save_manifest(a, dir.path() / "a.tsv");
  save_manifest(b, dir.path() / "b.tsv");
  EXPECT_EQ(slurp(dir.path() / "a.tsv"), slurp(dir.path() / "b.tsv"));
  const auto loaded = load_manifest(dir.path() / "a.tsv");
  EXPECT_EQ(loaded.name, "toy");
  EXPECT_EQ(loaded.split_seed, 3u);
  EXPECT_EQ(loaded.records, a.records);
  EXPECT_EQ(loaded.identity_count(Split::train), a.identity_count(Split::train));
  EXPECT_TRUE(fs::exists(loaded.resolve(loaded.records[0].image_path)));
}

TEST(Manifest, LoadRejectsLeakAndMalformed) {
  TempDir dir;
  {
    std::ofstream out(dir.path() / "leak.tsv");
    out << "# name=x\troot=.\tsplit_seed=0\n"
        << "a.png\ta.png\tid1\ttrain\n"
        << "b.png\tb.png\tid1\ttest\n";
  }
  EXPECT_THROW(load_manifest(dir.path() / "leak.tsv"), UserError);
  {
    std::ofstream out(dir.path() / "bad.tsv");
    out << "# name=x\troot=.\tsplit_seed=0\n" << "a.png\tid1\ttrain\n";
  }
  EXPECT_THROW(load_manifest(dir.path() / "bad.tsv"), UserError);
  EXPECT_THROW(load_manifest(dir.path() / "nope.tsv"), UserError);
}

TEST(LoadSample, BoxMatchesBruteForceAndIsRepeatable) {
  TempDir dir;
  SynthSpec spec;
  spec.count = 8;
  spec.seed = 4;
  const auto m = generate_synthetic(spec, dir.path());
  for (const auto& rec : m.records) {
    const Sample s = load_sample(m, rec, 1, {64, 64});
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if (s.mask.at(r, c)) {
          x0 = std::min(x0, c), x1 = std::max(x1, c);
          y0 = std::min(y0, r), y1 = std::max(y1, r);
        }
    EXPECT_EQ(s.box, (BoundingBox{x0, y0, x1, y1}));
    for (auto v : s.mask.data()) EXPECT_LE(v, 1);
    const Sample again = load_sample(m, rec, 1, {64, 64});
    EXPECT_EQ(again.image.image.data, s.image.image.data);
    EXPECT_EQ(again.mask, s.mask);
  }
}

TEST(LoadSplit, QuarantinesEmptyMasksAndUnreadableImages) {
  TempDir dir;
  write_pair(dir.path(), "id1_1", "id1_1");
  write_pair(dir.path(), "id2_1", "id2_1");
  write_pair(dir.path(), "id3_1", "id3_1");
  write_mask(Mask(24, 32), dir.path() / "masks" / "id2_1.png");
  { std::ofstream(dir.path() / "images" / "id3_1.png") << "not a png"; }
  auto m = build_manifest(dir.path(), LayoutSpec::preset("synth"), 0, 1.0);
  EXPECT_THROW(load_sample(m, m.records[1], 1, {32, 32}), EmptyMask);
  const auto loaded = load_split(m, Split::train, 1, {32, 32});
  ASSERT_EQ(loaded.samples.size(), 1u);
  EXPECT_EQ(loaded.samples[0].id, "id1_1");
  ASSERT_EQ(loaded.quarantined.size(), 2u);
}

TEST(Synth, ZeroCountWritesNothing) {
  TempDir dir;
  SynthSpec spec;
  spec.count = 0;
  const auto m = generate_synthetic(spec, dir.path() / "out");
  EXPECT_TRUE(m.records.empty());
  EXPECT_FALSE(fs::exists(dir.path() / "out" / "images"));
}

TEST(Synth, RegenerationIsBitIdentical) {
  TempDir a, b;
  SynthSpec spec;
  spec.count = 12;
  spec.seed = 99;
  const auto ma = generate_synthetic(spec, a.path());
  const auto mb = generate_synthetic(spec, b.path());
  ASSERT_EQ(ma.records.size(), 12u);
  EXPECT_EQ(ma.records, mb.records);
  for (const auto& r : ma.records) {
    EXPECT_EQ(slurp(ma.resolve(r.image_path)), slurp(mb.resolve(r.image_path)));
    EXPECT_EQ(slurp(ma.resolve(r.mask_path)), slurp(mb.resolve(r.mask_path)));
  }
  spec.seed = 100;
  EXPECT_NE(cv::norm(render_synthetic(spec, 0).image,
                     render_synthetic(SynthSpec{.seed = 99}, 0).image, cv::NORM_L1),
            0.0);
}

TEST(Synth, MasksAreNonEmptyAnnuliWithImbalance) {
  SynthSpec spec;
  spec.seed = 5;
  for (int i = 0; i < spec.count; ++i) {
    const auto s = render_synthetic(spec, i);
    ASSERT_EQ(s.image.type(), CV_8UC1);
    const BoundingBox box = mask_to_bbox(s.mask);
    EXPECT_LT(box.area(), static_cast<long long>(spec.image_size) * spec.image_size);
    const auto fg = static_cast<double>(s.mask.count());
    const double bg = static_cast<double>(spec.image_size) * spec.image_size - fg;
    EXPECT_GE(bg / fg, 5.0) << "image " << i;
    EXPECT_GT(box.width(), 4);
  }
}

TEST(Synth, VariantsDiffer) {
  const auto a = SynthSpec::variant("a"), b = SynthSpec::variant("b"), c = SynthSpec::variant("c");
  EXPECT_NE(a.iris.lo, b.iris.lo);
  EXPECT_NE(a.eyelid_probability, c.eyelid_probability);
  EXPECT_THROW(SynthSpec::variant("z"), UserError);
}

TEST(Preprocess, IdentityResizeKeepsGeometryAndRange) {
  cv::Mat img(32, 32, CV_8UC1);
  cv::randu(img, 0, 256);
  const auto p = preprocess(img, 1, {32, 32});
  EXPECT_TRUE(p.transform.identity());
  ASSERT_EQ(p.image.height, 32);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      EXPECT_FLOAT_EQ(p.image.data[r * 32 + c], img.at<std::uint8_t>(r, c) / 255.0f);
}

TEST(Preprocess, ColorConversionAndResize) {
  cv::Mat bgr(20, 40, CV_8UC3, cv::Scalar(255, 0, 0));  // pure blue
  const auto rgb = preprocess(bgr, 3, {16, 16});
  ASSERT_EQ(rgb.image.channels, 3);
  EXPECT_FLOAT_EQ(rgb.image.channel(0)[0], 0.0f);
  EXPECT_FLOAT_EQ(rgb.image.channel(2)[0], 1.0f);
  const auto gray = preprocess(bgr, 1, {16, 16});
  EXPECT_NEAR(gray.image.data[0], 29.0f / 255.0f, 1.5f / 255.0f);
  EXPECT_EQ(gray.transform.native, (Extent{20, 40}));
}

TEST(Preprocess, BoxTransformRoundTrip) {
  const ResizeTransform t{{200, 300}, {100, 100}};
  const BoundingBox native{30, 40, 210, 160};
  const BoundingBox model = t.to_model(native);
  EXPECT_TRUE(model.valid_within(t.model));
  const BoundingBox back = t.to_native(model);
  EXPECT_LE(std::abs(back.x_min - native.x_min), 3);
  EXPECT_LE(std::abs(back.x_max - native.x_max), 3);
  EXPECT_LE(std::abs(back.y_min - native.y_min), 2);
  EXPECT_LE(std::abs(back.y_max - native.y_max), 2);
  const ResizeTransform id{{50, 50}, {50, 50}};
  EXPECT_EQ(id.to_model(BoundingBox{10, 12, 30, 40}), (BoundingBox{10, 12, 30, 40}));
}

TEST(Preprocess, ResizeMaskStaysBinary) {
  std::mt19937_64 rng(3);
  const Mask m = testing_util::random_mask(rng, 37, 53, 0.3, true);
  for (Extent e : {Extent{16, 16}, Extent{100, 70}, Extent{37, 53}}) {
    const Mask r = resize_mask(m, e);
    EXPECT_EQ(r.height(), e.height);
    for (auto v : r.data()) EXPECT_LE(v, 1);
  }
  EXPECT_EQ(resize_mask(m, {37, 53}), m);
}

TEST(Preprocess, LogitsToNativeIsBilinear) {
  const ResizeTransform t{{4, 4}, {2, 2}};
  Raster r(2, 2);
  r.values = {0.0f, 1.0f, 2.0f, 3.0f};
  const Raster n = t.logits_to_native(r);
  ASSERT_EQ(n.values.size(), 16u);
  EXPECT_FLOAT_EQ(n.values[0], 0.0f);
  EXPECT_FLOAT_EQ(n.values[15], 3.0f);
  EXPECT_GT(n.values[1], n.values[0]);
  EXPECT_LT(n.values[1], n.values[3]);
}

TEST(Preprocess, UnreadableImageThrows) {
  TempDir dir;
  { std::ofstream(dir.path() / "x.png") << "garbage"; }
  EXPECT_THROW(read_image(dir.path() / "x.png"), UnreadableImage);
  EXPECT_THROW(read_image(dir.path() / "missing.png"), UnreadableImage);
}

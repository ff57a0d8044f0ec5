#include <doctest.h>

#include "cycletrack/data.hpp"
#include "cycletrack/errors.hpp"
#include "cycletrack/png_io.hpp"

#include <filesystem>
#include <fstream>

using namespace cycletrack;
namespace fs = std::filesystem;

namespace {

SceneSpec plain_spec() {
  SceneSpec s;
  s.canvas_w = s.canvas_h = 128;
  s.target_w = 24;
  s.target_h = 28;
  s.speed = 3;
  s.length = 12;
  s.background_seed = 11;
  return s;
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("cycletrack_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// mask bounding box scanned from exact target-color pixels
BBox scan_color_bbox(const Image& img, const std::array<std::uint8_t, 3>& col) {
  int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(x, y, 0) == col[0] && img.at(x, y, 1) == col[1] &&
          img.at(x, y, 2) == col[2]) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  REQUIRE(max_x >= 0);
  return BBox::from_corner(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
}

}  // namespace

TEST_CASE("generate: determinism and motion laws") {
  SceneSpec s = plain_spec();

  // zero speed -> identical boxes
  s.speed = 0;
  const auto still = generate(s, 5);
  for (const auto& b : still.full_annotations) {
    CHECK(b.cx == still.full_annotations[0].cx);
    CHECK(b.cy == still.full_annotations[0].cy);
  }

  // linear motion: consecutive centers differ by exactly `speed`
  s.speed = 3;
  s.motion = MotionModel::Linear;
  const auto seq = generate(s, 6);
  for (int i = 1; i < seq.length(); ++i) {
    const double d = center_distance(seq.full_annotations[i],
                                     seq.full_annotations[i - 1]);
    CHECK(d == doctest::Approx(3.0));
  }

  // bitwise repeatability
  const auto a = generate(s, 7);
  const auto b = generate(s, 7);
  REQUIRE(a.length() == b.length());
  for (int i = 0; i < a.length(); ++i) CHECK(a.frames[i].data == b.frames[i].data);

  // infeasible spec
  SceneSpec bad = plain_spec();
  bad.target_w = 200;
  CHECK_THROWS_AS(generate(bad, 1), ConfigError);
}

TEST_CASE("generate: ground truth matches the rasterized mask") {
  for (auto shape :
       {TargetShape::Rectangle, TargetShape::Ellipse, TargetShape::Triangle}) {
    for (auto motion : {MotionModel::Linear, MotionModel::Sinusoidal,
                        MotionModel::RandomWalk}) {
      SceneSpec s = plain_spec();
      s.shape = shape;
      s.motion = motion;
      s.length = 8;
      const auto seq = generate(s, 99);
      for (int i = 0; i < seq.length(); ++i) {
        const BBox scanned = scan_color_bbox(seq.frames[i], s.target_color);
        CHECK(iou(seq.full_annotations[i], scanned) >= 0.95);
        // target fully inside the canvas
        CHECK(seq.full_annotations[i].x0() >= 0.0);
        CHECK(seq.full_annotations[i].y1() <= s.canvas_h);
      }
    }
  }
}

TEST_CASE("generate: attribute tags follow the spec") {
  SceneSpec s = plain_spec();
  auto none = generate(s, 1);
  CHECK(none.attributes.empty());

  s.occluders.push_back({3, 5, 0.5});
  auto occ = generate(s, 1);
  CHECK(std::find(occ.attributes.begin(), occ.attributes.end(), "occlusion") !=
        occ.attributes.end());

  SceneSpec fast = plain_spec();
  fast.speed = 7;
  auto f = generate(fast, 1);
  CHECK(std::find(f.attributes.begin(), f.attributes.end(), "fast-motion") !=
        f.attributes.end());

  SceneSpec dis = plain_spec();
  dis.distractor_count = 2;
  auto d = generate(dis, 1);
  CHECK(std::find(d.attributes.begin(), d.attributes.end(), "distractor") !=
        d.attributes.end());
}

TEST_CASE("save/load round-trip is lossless") {
  const auto dir = temp_dir("roundtrip");
  SceneSpec s = plain_spec();
  s.occluders.push_back({2, 4, 0.4});
  auto seq = generate(s, 42);
  seq.id = "seq_a";
  save_sequence(seq, (dir / "seq_a").string());

  const auto loaded = load_sequence((dir / "seq_a").string());
  REQUIRE(loaded.length() == seq.length());
  for (int i = 0; i < seq.length(); ++i)
    CHECK(loaded.frames[i].data == seq.frames[i].data);
  REQUIRE(loaded.has_full_annotations());
  for (int i = 0; i < seq.length(); ++i) {
    CHECK(loaded.full_annotations[i].cx == doctest::Approx(seq.full_annotations[i].cx));
    CHECK(loaded.full_annotations[i].w == doctest::Approx(seq.full_annotations[i].w));
  }
  CHECK(loaded.attributes == seq.attributes);
  fs::remove_all(dir);
}

TEST_CASE("loader handles the minimal single-frame layout") {
  const auto dir = temp_dir("single");
  Image img(32, 32, 100);
  write_png((dir / "0001.png").string(), img);
  std::ofstream(dir / "groundtruth.txt") << "10,20,30,40\n";  // corner form
  const auto seq = load_sequence(dir.string());
  CHECK(seq.length() == 1);
  CHECK(seq.first_annotation.cx == doctest::Approx(25.0));
  CHECK(seq.first_annotation.cy == doctest::Approx(40.0));
  CHECK(seq.first_annotation.w == doctest::Approx(30.0));
  CHECK(seq.first_annotation.h == doctest::Approx(40.0));
  fs::remove_all(dir);
}

TEST_CASE("loader reports distinct error kinds") {
  // missing groundtruth
  {
    const auto dir = temp_dir("nogt");
    write_png((dir / "0001.png").string(), Image(8, 8, 1));
    try {
      load_sequence(dir.string());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.kind == DataErrorKind::MissingGroundtruth);
    }
    fs::remove_all(dir);
  }
  // non-contiguous indices
  {
    const auto dir = temp_dir("gap");
    write_png((dir / "0001.png").string(), Image(8, 8, 1));
    write_png((dir / "0003.png").string(), Image(8, 8, 1));
    std::ofstream(dir / "groundtruth.txt") << "1,1,2,2\n";
    try {
      load_sequence(dir.string());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.kind == DataErrorKind::NonContiguousIndices);
    }
    fs::remove_all(dir);
  }
  // unreadable image
  {
    const auto dir = temp_dir("badimg");
    std::ofstream(dir / "0001.png") << "this is not a png";
    std::ofstream(dir / "groundtruth.txt") << "1,1,2,2\n";
    try {
      load_sequence(dir.string());
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(e.kind == DataErrorKind::UnreadableImage);
    }
    fs::remove_all(dir);
  }
}

TEST_CASE("training batch sampling") {
  SceneSpec s = plain_spec();
  s.length = 3;
  std::vector<FrameSequence> seqs;
  seqs.push_back(generate(s, 1));
  s.length = 2;  // too short for L=2
  seqs.push_back(generate(s, 2));

  Rng rng(5);
  const auto batch = sample_training_batch(seqs, 4, 2, rng);
  CHECK(batch.skipped_sequences == 1);
  for (const auto& smp : batch.samples) {
    CHECK(smp.seq == &seqs[0]);  // only eligible sequence
    CHECK(smp.frame_indices == std::vector<int>{1, 2});  // single window
    CHECK(smp.frame_indices.front() >= 1);  // frame 0 never appears unlabeled
    CHECK(smp.y0.cx == seqs[0].first_annotation.cx);
  }

  // fixed seed -> identical batches
  Rng r1(9), r2(9);
  const auto b1 = sample_training_batch(seqs, 8, 2, r1);
  const auto b2 = sample_training_batch(seqs, 8, 2, r2);
  for (std::size_t i = 0; i < b1.samples.size(); ++i)
    CHECK(b1.samples[i].frame_indices == b2.samples[i].frame_indices);
}

TEST_CASE("dataset generation writes manifest deterministically") {
  const auto d1 = temp_dir("ds1");
  const auto d2 = temp_dir("ds2");
  DatasetSpec ds;
  ds.count = 3;
  ds.name = "mini";
  ds.length_min = 6;
  ds.length_max = 8;
  ds.canvas_w = ds.canvas_h = 96;
  ds.target_min = 20;
  ds.target_max = 30;
  const auto ids1 = generate_dataset(ds, d1.string(), 77);
  const auto ids2 = generate_dataset(ds, d2.string(), 77);
  CHECK(ids1 == ids2);
  CHECK(ids1.size() == 3);

  std::ifstream m1(d1 / "manifest.json"), m2(d2 / "manifest.json");
  std::stringstream s1, s2;
  s1 << m1.rdbuf();
  s2 << m2.rdbuf();
  CHECK(s1.str() == s2.str());
  CHECK(!s1.str().empty());

  const auto all = load_dataset(d1.string());
  CHECK(all.size() == 3);
  const auto stats = compute_pixel_stats(all);
  CHECK(stats.mean[0] > 20.0);
  CHECK(stats.mean[0] < 235.0);
  CHECK(stats.stdev[0] >= 1.0);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

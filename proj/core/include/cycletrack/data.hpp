// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cycletrack/geometry.hpp"
#include "cycletrack/image.hpp"
#include "cycletrack/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cycletrack {

enum class MotionModel { Linear, Sinusoidal, RandomWalk };
enum class TargetShape { Rectangle, Ellipse, Triangle };

const char* motion_name(MotionModel m);
const char* shape_name(TargetShape s);
MotionModel motion_from_name(const std::string& s);
TargetShape shape_from_name(const std::string& s);

struct OccluderEvent {
  int start_frame = 0;
  int end_frame = 0;  // inclusive
  double coverage = 0.5;
};

// One synthetic scene: a colored shape moving over textured background,
// optionally with distractors and scripted occlusions.
struct SceneSpec {
  int canvas_w = 160;
  int canvas_h = 160;
  TargetShape shape = TargetShape::Rectangle;
  std::array<std::uint8_t, 3> target_color{220, 60, 40};
  int target_w = 32;
  int target_h = 32;
  MotionModel motion = MotionModel::Linear;
  int speed = 2;  // px/frame; integer so ground truth stays grid-exact
  int distractor_count = 0;
  double distractor_similarity = 0.5;  // 0 = unrelated, 1 = near clone
  std::vector<OccluderEvent> occluders;
  std::uint64_t background_seed = 0;
  int length = 30;

  void validate() const;
};

struct FrameSequence {
  std::string id;
  std::vector<Image> frames;
  BBox first_annotation;
  std::vector<BBox> full_annotations;   // synthetic eval only; may be empty
  std::vector<std::string> attributes;  // occlusion, fast-motion, distractor

  bool has_full_annotations() const {
    return full_annotations.size() == frames.size();
  }
  int length() const { return static_cast<int>(frames.size()); }
};

// Deterministic given (spec, seed). Ground truth is the bounding box of the
// target's own rasterized mask, recorded before occluders are drawn.
FrameSequence generate(const SceneSpec& spec, std::uint64_t seed);

// Directory layout: 0001.png..NNNN.png, groundtruth.txt (one x,y,w,h line
// per frame; the first line is the first-frame label), attributes.txt.
void save_sequence(const FrameSequence& seq, const std::string& dir);
FrameSequence load_sequence(const std::string& dir);

// All sequence subdirectories of a dataset directory, sorted by name.
std::vector<FrameSequence> load_dataset(const std::string& dir);

// Ranges a dataset generation run draws each scene from.
struct DatasetSpec {
  std::string name = "synth";
  int count = 20;
  int canvas_w = 160, canvas_h = 160;
  int length_min = 24, length_max = 36;
  int target_min = 24, target_max = 44;
  int speed_min = 1, speed_max = 4;
  int fast_speed = 7;  // speed used for fast-motion sequences
  double fast_motion_prob = 0.15;
  double occlusion_prob = 0.2;
  double distractor_prob = 0.4;
  int max_distractors = 2;
  double similarity_min = 0.2, similarity_max = 0.7;
  std::vector<MotionModel> motions{MotionModel::Linear, MotionModel::Sinusoidal,
                                   MotionModel::RandomWalk};

  void validate() const;
};

DatasetSpec parse_dataset_spec(const std::string& json_path);
SceneSpec sample_scene_spec(const DatasetSpec& ds, Rng& rng);

// Writes `count` generated sequences plus manifest.json; returns the ids.
std::vector<std::string> generate_dataset(const DatasetSpec& ds,
                                          const std::string& out_dir,
                                          std::uint64_t seed);

// A labeled first frame plus a window of unlabeled later frames. Carries no
// ground truth beyond the first-frame box.
struct TrainSample {
  const FrameSequence* seq = nullptr;
  BBox y0;                         // first-frame annotation
  std::vector<int> frame_indices;  // L unlabeled frame indices, ascending
};

// Uniformly picks sequences and contiguous windows of length L starting at
// frame >= 1. Sequences shorter than L+1 frames are skipped (with a warning
// once per call site via the returned skip count).
struct BatchResult {
  std::vector<TrainSample> samples;
  int skipped_sequences = 0;
};
BatchResult sample_training_batch(const std::vector<FrameSequence>& seqs,
                                  int batch_size, int window_len, Rng& rng);

// Per-channel mean/std over every pixel of every frame (for normalization).
struct PixelStats {
  std::array<double, 3> mean{127.5, 127.5, 127.5};
  std::array<double, 3> stdev{64.0, 64.0, 64.0};
};
PixelStats compute_pixel_stats(const std::vector<FrameSequence>& seqs);

}  // namespace cycletrack

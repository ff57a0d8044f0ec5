// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/data.hpp"

#include "cycletrack/errors.hpp"
#include "cycletrack/png_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace cycletrack {

namespace {

constexpr int kFastMotionSpeed = 6;  // px/frame at or above which we tag fast-motion

struct MaskBBox {
  int min_x = 1 << 30, min_y = 1 << 30, max_x = -1, max_y = -1;
  bool any() const { return max_x >= 0; }
  BBox to_box() const {
    // pixel-extent convention: pixel i spans [i, i+1]
    return BBox::from_corner(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
  }
};

bool inside_shape(TargetShape shape, double px, double py, double x0, double y0,
                  double w, double h) {
  switch (shape) {
    case TargetShape::Rectangle:
      return px >= x0 && px < x0 + w && py >= y0 && py < y0 + h;
    case TargetShape::Ellipse: {
      const double dx = (px - (x0 + w / 2)) / (w / 2);
      const double dy = (py - (y0 + h / 2)) / (h / 2);
      return dx * dx + dy * dy <= 1.0;
    }
    case TargetShape::Triangle: {
      // isoceles: apex top-center, base at the bottom edge
      const double ax = x0 + w / 2, ay = y0;
      const double bx = x0, by = y0 + h;
      const double cx = x0 + w, cy = y0 + h;
      auto side = [&](double x1, double y1, double x2, double y2) {
        return (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
      };
      const double d1 = side(ax, ay, bx, by);
      const double d2 = side(bx, by, cx, cy);
      const double d3 = side(cx, cy, ax, ay);
      const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
      const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
      return !(has_neg && has_pos);
    }
  }
  return false;
}

// Hard-edged rasterization: a pixel is filled iff its center lies inside.
MaskBBox draw_shape(Image& img, TargetShape shape, int x0, int y0, int w, int h,
                    const std::array<std::uint8_t, 3>& color) {
  MaskBBox bb;
  const int lo_x = std::max(0, x0), hi_x = std::min(img.width - 1, x0 + w);
  const int lo_y = std::max(0, y0), hi_y = std::min(img.height - 1, y0 + h);
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      if (!inside_shape(shape, x + 0.5, y + 0.5, x0, y0, w, h)) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
      bb.min_x = std::min(bb.min_x, x);
      bb.max_x = std::max(bb.max_x, x);
      bb.min_y = std::min(bb.min_y, y);
      bb.max_y = std::max(bb.max_y, y);
    }
  }
  return bb;
}

// Smooth grayish background: coarse value-noise grid, bilinearly upsampled,
// with a small fixed per-channel tint.
Image make_background(int w, int h, std::uint64_t seed) {
  Rng rng(derive_seed({seed, 0xb6u}));
  const int cell = 16;
  const int gw = w / cell + 2, gh = h / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (auto& v : grid) v = rng.uniform(70, 185);
  const double tint[3] = {rng.uniform(-6, 6), rng.uniform(-6, 6),
                          rng.uniform(-6, 6)};
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / cell;
    const int iy = static_cast<int>(gy);
    const double fy = gy - iy;
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / cell;
      const int ix = static_cast<int>(gx);
      const double fx = gx - ix;
      const double v00 = grid[iy * gw + ix], v01 = grid[iy * gw + ix + 1];
      const double v10 = grid[(iy + 1) * gw + ix], v11 = grid[(iy + 1) * gw + ix + 1];
      const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                       fy * ((1 - fx) * v10 + fx * v11);
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = static_cast<std::uint8_t>(
            std::clamp(v + tint[c], 0.0, 255.0));
    }
  }
  return img;
}

// Integer-position motion state. Velocity components flip before a step
// that would leave the bounds, so every step has the same magnitude.
struct Mover {
  int x = 0, y = 0;  // top-left
  int w = 0, h = 0;
  int vx = 0, vy = 0;
  MotionModel model = MotionModel::Linear;
  // sinusoidal params
  double cx0 = 0, cy0 = 0, amp_x = 0, amp_y = 0, omega = 0, phase_x = 0,
         phase_y = 0;
  int speed = 0;

  void clamp_into(int W, int H) {
    x = std::clamp(x, 0, W - w);
    y = std::clamp(y, 0, H - h);
  }

  void step(int t, int W, int H, Rng& rng) {
    switch (model) {
      case MotionModel::Linear:
        if (x + vx < 0 || x + vx > W - w) vx = -vx;
        if (y + vy < 0 || y + vy > H - h) vy = -vy;
        x += vx;
        y += vy;
        break;
      case MotionModel::Sinusoidal:
        x = static_cast<int>(std::lround(cx0 + amp_x * std::sin(omega * t + phase_x)));
        y = static_cast<int>(std::lround(cy0 + amp_y * std::sin(omega * t + phase_y)));
        clamp_into(W, H);
        break;
      case MotionModel::RandomWalk:
        vx = std::clamp(vx + rng.uniform_int(-1, 1), -speed, speed);
        vy = std::clamp(vy + rng.uniform_int(-1, 1), -speed, speed);
        if (x + vx < 0 || x + vx > W - w) vx = -vx;
        if (y + vy < 0 || y + vy > H - h) vy = -vy;
        x += vx;
        y += vy;
        break;
    }
  }
};

Mover init_mover(const SceneSpec& spec, int w, int h, MotionModel model,
                 int speed, Rng& rng) {
  Mover m;
  m.w = w;
  m.h = h;
  m.model = model;
  m.speed = speed;
  m.x = rng.uniform_int(std::max(1, spec.canvas_w - w));
  m.y = rng.uniform_int(std::max(1, spec.canvas_h - h));
  switch (model) {
    case MotionModel::Linear: {
      // axis-aligned so consecutive centers differ by exactly `speed`
      const int axis = rng.uniform_int(2);
      const int sign = rng.uniform_int(2) ? 1 : -1;
      m.vx = axis == 0 ? sign * speed : 0;
      m.vy = axis == 1 ? sign * speed : 0;
      break;
    }
    case MotionModel::Sinusoidal: {
      m.cx0 = spec.canvas_w / 2.0 - w / 2.0;
      m.cy0 = spec.canvas_h / 2.0 - h / 2.0;
      m.amp_x = rng.uniform(0.3, 0.9) * (spec.canvas_w - w) / 2.0;
      m.amp_y = rng.uniform(0.3, 0.9) * (spec.canvas_h - h) / 2.0;
      const double period = rng.uniform(18, 40);
      m.omega = 2.0 * std::numbers::pi / period;
      m.phase_x = rng.uniform(0, 2.0 * std::numbers::pi);
      m.phase_y = rng.uniform(0, 2.0 * std::numbers::pi);
      m.x = static_cast<int>(std::lround(m.cx0 + m.amp_x * std::sin(m.phase_x)));
      m.y = static_cast<int>(std::lround(m.cy0 + m.amp_y * std::sin(m.phase_y)));
      m.clamp_into(spec.canvas_w, spec.canvas_h);
      break;
    }
    case MotionModel::RandomWalk:
      m.vx = rng.uniform_int(-speed, speed);
      m.vy = rng.uniform_int(-speed, speed);
      break;
  }
  return m;
}

std::array<std::uint8_t, 3> lerp_color(const std::array<std::uint8_t, 3>& a,
                                       const std::array<std::uint8_t, 3>& b,
                                       double t) {
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(
        std::clamp(a[c] + (b[c] - a[c]) * t, 0.0, 255.0));
  return out;
}

std::string fmt_box_line(const BBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g", b.x0(), b.y0(),
                b.w, b.h);
  return buf;
}

BBox parse_box_line(const std::string& line, const std::string& where) {
  double x, y, w, h;
  std::string s = line;
  std::replace(s.begin(), s.end(), ',', ' ');
  std::replace(s.begin(), s.end(), '\t', ' ');
  if (std::sscanf(s.c_str(), "%lf %lf %lf %lf", &x, &y, &w, &h) != 4)
    throw DataError(DataErrorKind::BadFormat,
                    "bad annotation line in " + where + ": '" + line + "'");
  return BBox::from_corner(x, y, w, h);
}

json scene_spec_to_json(const SceneSpec& s) {
  json occ = json::array();
  for (const auto& o : s.occluders)
    occ.push_back({{"start", o.start_frame},
                   {"end", o.end_frame},
                   {"coverage", o.coverage}});
  return {{"canvas_w", s.canvas_w},
          {"canvas_h", s.canvas_h},
          {"shape", shape_name(s.shape)},
          {"target_color", s.target_color},
          {"target_w", s.target_w},
          {"target_h", s.target_h},
          {"motion", motion_name(s.motion)},
          {"speed", s.speed},
          {"distractor_count", s.distractor_count},
          {"distractor_similarity", s.distractor_similarity},
          {"occluders", occ},
          {"background_seed", s.background_seed},
          {"length", s.length}};
}

}  // namespace

const char* motion_name(MotionModel m) {
  switch (m) {
    case MotionModel::Linear: return "linear";
    case MotionModel::Sinusoidal: return "sinusoidal";
    default: return "random_walk";
  }
}

const char* shape_name(TargetShape s) {
  switch (s) {
    case TargetShape::Rectangle: return "rectangle";
    case TargetShape::Ellipse: return "ellipse";
    default: return "triangle";
  }
}

MotionModel motion_from_name(const std::string& s) {
  if (s == "linear") return MotionModel::Linear;
  if (s == "sinusoidal") return MotionModel::Sinusoidal;
  if (s == "random_walk") return MotionModel::RandomWalk;
  throw ConfigError("unknown motion model: " + s);
}

TargetShape shape_from_name(const std::string& s) {
  if (s == "rectangle") return TargetShape::Rectangle;
  if (s == "ellipse") return TargetShape::Ellipse;
  if (s == "triangle") return TargetShape::Triangle;
  throw ConfigError("unknown target shape: " + s);
}

void SceneSpec::validate() const {
  if (canvas_w < 32 || canvas_h < 32)
    throw ConfigError("scene spec: canvas must be at least 32x32 (canvas_w/canvas_h)");
  if (target_w < 8 || target_h < 8)
    throw ConfigError("scene spec: target too small (target_w/target_h >= 8)");
  if (target_w >= canvas_w)
    throw ConfigError("scene spec: target_w must be smaller than canvas_w");
  if (target_h >= canvas_h)
    throw ConfigError("scene spec: target_h must be smaller than canvas_h");
  if (speed < 0 || speed >= std::min(canvas_w - target_w, canvas_h - target_h))
    throw ConfigError("scene spec: speed out of range for canvas (speed)");
  if (length < 1) throw ConfigError("scene spec: length must be >= 1");
  if (distractor_count < 0)
    throw ConfigError("scene spec: distractor_count must be >= 0");
  if (distractor_similarity < 0.0 || distractor_similarity > 1.0)
    throw ConfigError("scene spec: distractor_similarity must lie in [0,1]");
  for (const auto& o : occluders) {
    if (o.start_frame < 0 || o.end_frame >= length || o.start_frame > o.end_frame)
      throw ConfigError("scene spec: occluder frames out of range (occluders)");
    if (o.coverage < 0.0 || o.coverage > 1.0)
      throw ConfigError("scene spec: occluder coverage must lie in [0,1]");
  }
}

FrameSequence generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed({seed, 0x67656eull}));
  const Image background =
      make_background(spec.canvas_w, spec.canvas_h, spec.background_seed);

  Mover target = init_mover(spec, spec.target_w, spec.target_h, spec.motion,
                            spec.speed, rng);

  struct Distractor {
    Mover mover;
    TargetShape shape;
    std::array<std::uint8_t, 3> color;
  };
  std::vector<Distractor> distractors;
  for (int i = 0; i < spec.distractor_count; ++i) {
    const double sim = spec.distractor_similarity;
    Distractor d;
    const std::array<std::uint8_t, 3> base{
        static_cast<std::uint8_t>(rng.uniform_int(40, 200)),
        static_cast<std::uint8_t>(rng.uniform_int(40, 200)),
        static_cast<std::uint8_t>(rng.uniform_int(40, 200))};
    d.color = lerp_color(base, spec.target_color, sim);
    d.shape = sim >= 0.6 ? spec.shape
                         : static_cast<TargetShape>(rng.uniform_int(3));
    const int dw = std::clamp(
        static_cast<int>(std::lround(rng.uniform_int(12, 40) * (1 - sim) +
                                     spec.target_w * sim)),
        8, spec.canvas_w - 2);
    const int dh = std::clamp(
        static_cast<int>(std::lround(rng.uniform_int(12, 40) * (1 - sim) +
                                     spec.target_h * sim)),
        8, spec.canvas_h - 2);
    const auto model =
        static_cast<MotionModel>(rng.uniform_int(3));
    d.mover = init_mover(spec, dw, dh, model,
                         std::max(1, std::min(spec.speed, 3)), rng);
    distractors.push_back(std::move(d));
  }

  FrameSequence out;
  out.frames.reserve(spec.length);
  out.full_annotations.reserve(spec.length);

  for (int t = 0; t < spec.length; ++t) {
    if (t > 0) {
      target.step(t, spec.canvas_w, spec.canvas_h, rng);
      for (auto& d : distractors)
        d.mover.step(t, spec.canvas_w, spec.canvas_h, rng);
    }
    Image frame = background;
    for (const auto& d : distractors)
      draw_shape(frame, d.shape, d.mover.x, d.mover.y, d.mover.w, d.mover.h,
                 d.color);
    const MaskBBox mask =
        draw_shape(frame, spec.shape, target.x, target.y, target.w, target.h,
                   spec.target_color);
    if (!mask.any())
      throw NumericError("generate: target rasterized to an empty mask");
    const BBox gt = mask.to_box();

    for (const auto& o : spec.occluders) {
      if (t < o.start_frame || t > o.end_frame) continue;
      const int ow = target.w + 2;
      const int oh = std::max(1, static_cast<int>(std::ceil(o.coverage * target.h)));
      draw_shape(frame, TargetShape::Rectangle, target.x - 1, target.y, ow, oh,
                 {75, 75, 88});
    }

    out.frames.push_back(std::move(frame));
    out.full_annotations.push_back(gt);
  }
  out.first_annotation = out.full_annotations.front();

  if (!spec.occluders.empty()) out.attributes.push_back("occlusion");
  if (spec.speed >= kFastMotionSpeed) out.attributes.push_back("fast-motion");
  if (spec.distractor_count > 0) out.attributes.push_back("distractor");
  return out;
}

void save_sequence(const FrameSequence& seq, const std::string& dir) {
  fs::create_directories(dir);
  char name[32];
  for (int i = 0; i < seq.length(); ++i) {
    std::snprintf(name, sizeof(name), "%04d.png", i + 1);
    write_png((fs::path(dir) / name).string(), seq.frames[i]);
  }
  std::ofstream gt(fs::path(dir) / "groundtruth.txt");
  if (seq.has_full_annotations()) {
    for (const auto& b : seq.full_annotations) gt << fmt_box_line(b) << "\n";
  } else {
    gt << fmt_box_line(seq.first_annotation) << "\n";
  }
  std::ofstream attr(fs::path(dir) / "attributes.txt");
  for (const auto& a : seq.attributes) attr << a << "\n";
}

FrameSequence load_sequence(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw DataError(DataErrorKind::MissingFile, "no such sequence dir: " + dir);

  std::vector<std::pair<int, fs::path>> pngs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    try {
      pngs.emplace_back(std::stoi(e.path().stem().string()), e.path());
    } catch (const std::exception&) {
      throw DataError(DataErrorKind::BadFormat,
                      "non-numeric frame name: " + e.path().string());
    }
  }
  std::sort(pngs.begin(), pngs.end());
  if (pngs.empty())
    throw DataError(DataErrorKind::MissingFile, "no frames in " + dir);
  for (std::size_t i = 0; i < pngs.size(); ++i) {
    if (pngs[i].first != static_cast<int>(i) + 1)
      throw DataError(DataErrorKind::NonContiguousIndices,
                      "frame indices not contiguous from 0001 in " + dir);
  }

  const fs::path gt_path = fs::path(dir) / "groundtruth.txt";
  if (!fs::exists(gt_path))
    throw DataError(DataErrorKind::MissingGroundtruth,
                    "missing groundtruth.txt in " + dir);

  FrameSequence seq;
  seq.id = fs::path(dir).filename().string();
  for (const auto& [idx, p] : pngs) seq.frames.push_back(read_png(p.string()));

  std::ifstream gt(gt_path);
  std::string line;
  std::vector<BBox> boxes;
  while (std::getline(gt, line)) {
    if (line.empty()) continue;
    boxes.push_back(parse_box_line(line, gt_path.string()));
  }
  if (boxes.empty())
    throw DataError(DataErrorKind::MissingGroundtruth,
                    "empty groundtruth.txt in " + dir);
  seq.first_annotation = boxes.front();
  if (boxes.size() == seq.frames.size() && seq.frames.size() > 1)
    seq.full_annotations = std::move(boxes);

  std::ifstream attr(fs::path(dir) / "attributes.txt");
  while (std::getline(attr, line))
    if (!line.empty()) seq.attributes.push_back(line);
  return seq;
}

std::vector<FrameSequence> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw DataError(DataErrorKind::MissingFile, "no such dataset dir: " + dir);
  std::vector<std::string> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) subdirs.push_back(e.path().string());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<FrameSequence> out;
  out.reserve(subdirs.size());
  for (const auto& d : subdirs) out.push_back(load_sequence(d));
  if (out.empty())
    throw DataError(DataErrorKind::MissingFile, "dataset has no sequences: " + dir);
  return out;
}

void DatasetSpec::validate() const {
  if (count < 1) throw ConfigError("dataset spec: count must be >= 1");
  if (length_min < 2 || length_max < length_min)
    throw ConfigError("dataset spec: bad length range (length_min/length_max)");
  if (target_min < 8 || target_max < target_min)
    throw ConfigError("dataset spec: bad target size range (target_min/target_max)");
  if (target_max >= std::min(canvas_w, canvas_h))
    throw ConfigError("dataset spec: target_max must fit inside the canvas");
  if (speed_min < 0 || speed_max < speed_min)
    throw ConfigError("dataset spec: bad speed range (speed_min/speed_max)");
  if (motions.empty()) throw ConfigError("dataset spec: motions is empty");
}

DatasetSpec parse_dataset_spec(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in)
    throw DataError(DataErrorKind::MissingFile, "cannot open spec " + json_path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw ConfigError("dataset spec is not valid JSON: " + json_path);
  DatasetSpec ds;
  ds.name = j.value("name", ds.name);
  ds.count = j.value("count", ds.count);
  ds.canvas_w = j.value("canvas_w", ds.canvas_w);
  ds.canvas_h = j.value("canvas_h", ds.canvas_h);
  ds.length_min = j.value("length_min", ds.length_min);
  ds.length_max = j.value("length_max", ds.length_max);
  ds.target_min = j.value("target_min", ds.target_min);
  ds.target_max = j.value("target_max", ds.target_max);
  ds.speed_min = j.value("speed_min", ds.speed_min);
  ds.speed_max = j.value("speed_max", ds.speed_max);
  ds.fast_speed = j.value("fast_speed", ds.fast_speed);
  ds.fast_motion_prob = j.value("fast_motion_prob", ds.fast_motion_prob);
  ds.occlusion_prob = j.value("occlusion_prob", ds.occlusion_prob);
  ds.distractor_prob = j.value("distractor_prob", ds.distractor_prob);
  ds.max_distractors = j.value("max_distractors", ds.max_distractors);
  ds.similarity_min = j.value("similarity_min", ds.similarity_min);
  ds.similarity_max = j.value("similarity_max", ds.similarity_max);
  if (j.contains("motions")) {
    ds.motions.clear();
    for (const auto& m : j["motions"])
      ds.motions.push_back(motion_from_name(m.get<std::string>()));
  }
  ds.validate();
  return ds;
}

SceneSpec sample_scene_spec(const DatasetSpec& ds, Rng& rng) {
  SceneSpec s;
  s.canvas_w = ds.canvas_w;
  s.canvas_h = ds.canvas_h;
  s.length = rng.uniform_int(ds.length_min, ds.length_max);
  s.shape = static_cast<TargetShape>(rng.uniform_int(3));
  // saturated, strongly chromatic target colors over a grayish background
  const int hi = rng.uniform_int(190, 250);
  const int lo1 = rng.uniform_int(20, 90), lo2 = rng.uniform_int(20, 90);
  const int channel = rng.uniform_int(3);
  s.target_color = {static_cast<std::uint8_t>(channel == 0 ? hi : lo1),
                    static_cast<std::uint8_t>(channel == 1 ? hi : (channel == 0 ? lo1 : lo2)),
                    static_cast<std::uint8_t>(channel == 2 ? hi : lo2)};
  s.target_w = rng.uniform_int(ds.target_min, ds.target_max);
  s.target_h = rng.uniform_int(ds.target_min, ds.target_max);
  s.motion = ds.motions[rng.uniform_int(static_cast<int>(ds.motions.size()))];
  s.speed = rng.uniform() < ds.fast_motion_prob
                ? ds.fast_speed
                : rng.uniform_int(ds.speed_min, ds.speed_max);
  if (rng.uniform() < ds.distractor_prob)
    s.distractor_count = 1 + rng.uniform_int(ds.max_distractors);
  s.distractor_similarity = rng.uniform(ds.similarity_min, ds.similarity_max);
  if (rng.uniform() < ds.occlusion_prob && s.length >= 8) {
    OccluderEvent o;
    o.start_frame = rng.uniform_int(1, s.length / 2);
    o.end_frame = std::min(s.length - 1, o.start_frame + rng.uniform_int(2, 6));
    o.coverage = rng.uniform(0.3, 0.7);
    s.occluders.push_back(o);
  }
  s.background_seed = rng.next_u64();
  return s;
}

std::vector<std::string> generate_dataset(const DatasetSpec& ds,
                                          const std::string& out_dir,
                                          std::uint64_t seed) {
  ds.validate();
  fs::create_directories(out_dir);
  json manifest;
  manifest["name"] = ds.name;
  manifest["seed"] = seed;
  manifest["count"] = ds.count;
  json seq_list = json::array();
  std::vector<std::string> ids;

  for (int i = 0; i < ds.count; ++i) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(i), 0x7370ull}));
    const SceneSpec spec = sample_scene_spec(ds, rng);
    const std::uint64_t seq_seed =
        derive_seed({seed, static_cast<std::uint64_t>(i), 0x7366ull});
    const FrameSequence seq = generate(spec, seq_seed);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04d", ds.name.c_str(), i + 1);
    FrameSequence named = seq;
    named.id = name;
    save_sequence(named, (fs::path(out_dir) / name).string());
    ids.push_back(name);
    seq_list.push_back({{"id", name},
                        {"seed", seq_seed},
                        {"spec", scene_spec_to_json(spec)}});
  }
  manifest["sequences"] = seq_list;
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  return ids;
}

BatchResult sample_training_batch(const std::vector<FrameSequence>& seqs,
                                  int batch_size, int window_len, Rng& rng) {
  if (window_len < 1)
    throw std::invalid_argument("sample_training_batch: window_len >= 1");
  std::vector<int> eligible;
  int skipped = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].length() >= window_len + 1)
      eligible.push_back(static_cast<int>(i));
    else
      ++skipped;
  }
  if (eligible.empty())
    throw DataError(DataErrorKind::BadFormat,
                    "no sequence long enough for the training window");

  BatchResult out;
  out.skipped_sequences = skipped;
  for (int b = 0; b < batch_size; ++b) {
    const auto& seq =
        seqs[eligible[rng.uniform_int(static_cast<int>(eligible.size()))]];
    if (seq.first_annotation.w <= 0 || seq.first_annotation.h <= 0)
      throw DataError(DataErrorKind::BadFormat,
                      "degenerate first-frame annotation in " + seq.id);
    TrainSample s;
    s.seq = &seq;
    s.y0 = seq.first_annotation;
    const int start = rng.uniform_int(1, seq.length() - window_len);
    for (int i = 0; i < window_len; ++i) s.frame_indices.push_back(start + i);
    out.samples.push_back(std::move(s));
  }
  return out;
}

PixelStats compute_pixel_stats(const std::vector<FrameSequence>& seqs) {
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  std::size_t n = 0;
  for (const auto& s : seqs) {
    for (const auto& f : s.frames) {
      const std::size_t px = static_cast<std::size_t>(f.width) * f.height;
      for (std::size_t i = 0; i < px; ++i) {
        for (int c = 0; c < 3; ++c) {
          const double v = f.data[i * 3 + c];
          sum[c] += v;
          sumsq[c] += v * v;
        }
      }
      n += px;
    }
  }
  PixelStats st;
  if (n == 0) return st;
  for (int c = 0; c < 3; ++c) {
    st.mean[c] = sum[c] / n;
    const double var = std::max(1.0, sumsq[c] / n - st.mean[c] * st.mean[c]);
    st.stdev[c] = std::sqrt(var);
  }
  return st;
}

}  // namespace cycletrack

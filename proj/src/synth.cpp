#include "irisseg/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "irisseg/errors.hpp"

namespace fs = std::filesystem;

namespace irisseg {
namespace {

struct IdentityLook {
  double skin, sclera, iris, pupil;
  double radius_frac;
  double texture_freq, texture_phase, texture_freq2;
};

double draw(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double draw(std::mt19937_64& rng, GrayRange r) { return draw(rng, r.lo, r.hi); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint64_t out = 0;
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out;
}

IdentityLook identity_look(const SynthSpec& spec, int identity) {
  std::mt19937_64 rng(mix(spec.seed, 1, static_cast<std::uint64_t>(identity)));
  IdentityLook look;
  look.skin = draw(rng, spec.skin);
  look.sclera = draw(rng, spec.sclera);
  look.iris = draw(rng, spec.iris);
  look.pupil = draw(rng, spec.pupil);
  look.radius_frac = draw(rng, spec.iris_radius_min, spec.iris_radius_max);
  look.texture_freq = std::floor(draw(rng, 8, 24));
  look.texture_freq2 = std::floor(draw(rng, 3, 9));
  look.texture_phase = draw(rng, 0, 2 * std::numbers::pi);
  return look;
}

}  // namespace

SynthSpec SynthSpec::variant(const std::string& name) {
  SynthSpec s;
  s.name = "synth-" + name;
  if (name == "a") return s;
  if (name == "b") {
    s.skin = {95, 125};
    s.sclera = {140, 175};
    s.iris = {60, 90};
    s.pupil = {15, 35};
    s.noise_sigma = 10.0;
    s.texture_amplitude = 16.0;
    return s;
  }
  if (name == "c") {
    s.skin = {150, 185};
    s.sclera = {205, 240};
    s.iris = {95, 135};
    s.pupil = {20, 45};
    s.eyelid_probability = 0.8;
    s.noise_sigma = 5.0;
    return s;
  }
  throw UserError("unknown synthetic variant '" + name + "' (expected a, b or c)");
}

SynthSample render_synthetic(const SynthSpec& spec, int index) {
  const int n = spec.image_size;
  if (n < 16) throw UserError("synthetic image_size must be >= 16");
  const int per_id = std::max(spec.images_per_identity, 1);
  const IdentityLook look = identity_look(spec, index / per_id);
  std::mt19937_64 rng(mix(spec.seed, 2, static_cast<std::uint64_t>(index)));

  const double size = n;
  const double radius = std::max(3.0, look.radius_frac * size + draw(rng, -0.01, 0.01) * size);
  const double pupil_r = radius * draw(rng, spec.pupil_ratio_min, spec.pupil_ratio_max);
  const double cx = size / 2 + draw(rng, -0.08, 0.08) * size;
  const double cy = size / 2 + draw(rng, -0.06, 0.06) * size;
  const double pcx = cx + draw(rng, -0.08, 0.08) * radius;  // pupil slightly off-centre
  const double pcy = cy + draw(rng, -0.08, 0.08) * radius;

  // Eye opening between two parabolic lids around the iris centre.
  const double half_width = draw(rng, 0.40, 0.46) * size;
  const double lower_lid = radius * draw(rng, 1.05, 1.35);
  const bool droop = std::uniform_real_distribution<double>(0, 1)(rng) < spec.eyelid_probability;
  const double upper_lid = droop ? radius * draw(rng, 0.55, 0.85) : radius * draw(rng, 1.05, 1.35);
  const double glint_x = pcx + draw(rng, -0.4, 0.4) * pupil_r;
  const double glint_y = pcy + draw(rng, -0.4, 0.4) * pupil_r;
  const double glint_r = std::max(1.0, 0.25 * pupil_r);

  cv::Mat canvas(n, n, CV_32FC1);
  Mask mask(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double x = c + 0.5, y = r + 0.5;
      const double u = (x - cx) / half_width;
      const double lid = std::max(0.0, 1.0 - u * u);
      const bool open = y >= cy - upper_lid * lid && y <= cy + lower_lid * lid;
      const double dx = x - cx, dy = y - cy;
      const double rho = std::hypot(dx, dy);
      const bool in_pupil = std::hypot(x - pcx, y - pcy) < pupil_r;
      const bool in_iris_disk = rho < radius;

      double v;
      if (!open) {
        v = look.skin + 6.0 * std::sin(0.15 * x + 0.05 * y);
      } else if (in_pupil) {
        v = std::hypot(x - glint_x, y - glint_y) < glint_r ? 250.0 : look.pupil;
      } else if (in_iris_disk) {
        const double theta = std::atan2(dy, dx);
        const double t = rho / radius;
        v = look.iris + spec.texture_amplitude *
                            (0.6 * std::sin(look.texture_freq * theta + look.texture_phase + 3 * t) +
                             0.4 * std::cos(look.texture_freq2 * theta - 5 * t)) -
            8.0 * t;
        mask.set(r, c, true);
      } else {
        v = look.sclera;
      }
      canvas.at<float>(r, c) = static_cast<float>(v);
    }
  }
  cv::GaussianBlur(canvas, canvas, cv::Size(3, 3), 0.6);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  SynthSample out;
  out.image = cv::Mat(n, n, CV_8UC1);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      out.image.at<std::uint8_t>(r, c) =
          cv::saturate_cast<std::uint8_t>(canvas.at<float>(r, c) + noise(rng));
    }
  }
  out.mask = std::move(mask);
  return out;
}

DatasetManifest generate_synthetic(const SynthSpec& spec, const fs::path& out_dir) {
  if (spec.count < 0) throw UserError("synthetic count must be >= 0");
  if (spec.count == 0) {
    DatasetManifest empty;
    empty.name = spec.name;
    empty.root = out_dir;
    empty.split_seed = spec.seed;
    return empty;
  }
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoFailure("cannot create " + out_dir.string() + ": " + ec.message());

  const int per_id = std::max(spec.images_per_identity, 1);
  for (int i = 0; i < spec.count; ++i) {
    const SynthSample s = render_synthetic(spec, i);
    char name[64];
    std::snprintf(name, sizeof(name), "id%04d_%02d.png", i / per_id, i % per_id);
    if (!cv::imwrite((out_dir / "images" / name).string(), s.image)) {
      throw IoFailure("cannot write " + (out_dir / "images" / name).string());
    }
    write_mask(s.mask, out_dir / "masks" / name);
  }
  DatasetManifest manifest =
      build_manifest(out_dir, LayoutSpec::preset("synth"), spec.seed, spec.train_fraction, spec.name);
  save_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace irisseg

#include "cyclehair/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cyclehair/errors.hpp"
#include "cyclehair/random.hpp"

namespace cyclehair {

namespace {

constexpr const char* kColors[] = {"Black_Hair", "Blond_Hair", "Brown_Hair", "Gray_Hair"};

// BGR, as OpenCV draws.
cv::Scalar hair_bgr(std::string_view color) {
  if (color == "Black_Hair") return {22, 20, 25};
  if (color == "Blond_Hair") return {110, 190, 225};
  if (color == "Brown_Hair") return {40, 70, 115};
  return {165, 165, 165};
}

int jitter(Rng& rng, int spread) { return static_cast<int>(uniform_index(rng, 2 * spread + 1)) - spread; }

}  // namespace

const std::vector<std::string>& synthetic_attributes() {
  static const std::vector<std::string> names{"Bald",    "Black_Hair", "Blond_Hair",    "Brown_Hair", "Gray_Hair",
                                              "Male",    "Smiling",    "Straight_Hair", "Wavy_Hair"};
  return names;
}

corpus::AttributeManifest synthetic_manifest(const SyntheticOptions& options) {
  corpus::AttributeManifest manifest;
  manifest.attributes = synthetic_attributes();
  Rng rng(derive_seed(options.seed, 0));
  const auto column = [&](std::string_view name) { return manifest.index_of(name); };
  for (std::size_t i = 0; i < options.n_records; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i + 1);
    corpus::AttributeRecord record{name, std::vector<std::int8_t>(manifest.attributes.size(), -1)};
    const bool male = uniform_unit(rng) < options.male_fraction;
    const bool bald = male && uniform_unit(rng) < options.bald_fraction;
    if (male) record.flags[column("Male")] = 1;
    if (uniform_unit(rng) < 0.5) record.flags[column("Smiling")] = 1;
    if (bald) {
      record.flags[column("Bald")] = 1;
    } else {
      record.flags[column(kColors[uniform_index(rng, 4)])] = 1;
      record.flags[column(uniform_unit(rng) < 0.5 ? "Straight_Hair" : "Wavy_Hair")] = 1;
    }
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

void render_synthetic_face(const corpus::AttributeManifest& manifest, const corpus::AttributeRecord& record,
                           const SyntheticOptions& options, const std::filesystem::path& png_path) {
  const int w = options.width;
  const int h = options.height;
  // Per-image variation is keyed on the filename so images do not depend on
  // record order.
  std::uint64_t key = options.seed;
  for (char c : record.filename) key = derive_seed(key, static_cast<unsigned char>(c));
  Rng rng(key);

  const int shade = 180 + jitter(rng, 40);
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(shade, shade - 10, shade - 25));
  const cv::Point center(w / 2 + jitter(rng, 2), static_cast<int>(h * 0.56) + jitter(rng, 2));
  const cv::Size face_axes(static_cast<int>(w * 0.28), static_cast<int>(h * 0.30));
  const cv::Scalar skin(120 + jitter(rng, 20), 160 + jitter(rng, 20), 205 + jitter(rng, 20));

  const bool bald = manifest.flag(record, "Bald") == 1;
  if (!bald) {
    std::string color = "Gray_Hair";
    for (const char* c : kColors) {
      if (manifest.flag(record, c) == 1) color = c;
    }
    const bool wavy = manifest.flag(record, "Wavy_Hair") == 1;
    cv::Mat hair_mask = cv::Mat::zeros(h, w, CV_8U);
    cv::ellipse(hair_mask, cv::Point(center.x, center.y - static_cast<int>(h * 0.10)),
                cv::Size(static_cast<int>(w * 0.36), static_cast<int>(h * 0.34)), 0, 0, 360, 255, cv::FILLED);
    const cv::Scalar base = hair_bgr(color);
    const double phase = uniform_unit(rng) * 6.283185307179586;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!hair_mask.at<std::uint8_t>(y, x)) continue;
        const double offset = wavy ? 3.0 * std::sin(y * 0.45 + phase) : 0.0;
        const bool stroke = static_cast<int>(std::floor((x + offset) / 3.0)) % 2 == 0;
        const double gain = stroke ? 0.75 : 1.0;
        auto& px = canvas.at<cv::Vec3b>(y, x);
        for (int c = 0; c < 3; ++c) px[c] = cv::saturate_cast<std::uint8_t>(base[c] * gain + 12.0);
      }
    }
  }
  cv::ellipse(canvas, center, face_axes, 0, 0, 360, skin, cv::FILLED);
  if (bald) {
    cv::ellipse(canvas, cv::Point(center.x - face_axes.width / 3, center.y - face_axes.height * 2 / 3),
                cv::Size(face_axes.width / 5, face_axes.height / 10), -20, 0, 360, skin + cv::Scalar(25, 25, 25),
                cv::FILLED);
  }
  const int eye_y = center.y - face_axes.height / 6;
  for (int side : {-1, 1}) {
    cv::circle(canvas, cv::Point(center.x + side * face_axes.width / 2 - side * 2, eye_y), std::max(1, w / 30),
               cv::Scalar(40, 30, 30), cv::FILLED);
  }
  const bool smiling = manifest.flag(record, "Smiling") == 1;
  cv::ellipse(canvas, cv::Point(center.x, center.y + face_axes.height / 2), cv::Size(face_axes.width / 3, h / 30 + 1), 0,
              smiling ? 0 : 180, smiling ? 180 : 360, cv::Scalar(60, 60, 150), std::max(1, w / 45));

  if (!cv::imwrite(png_path.string(), canvas)) throw CheckpointError(png_path.string() + ": cannot write PNG");
}

corpus::AttributeManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& options) {
  if (options.width < 16 || options.height < 16) throw ConfigError("synthetic images must be at least 16 px");
  const auto manifest = synthetic_manifest(options);
  std::filesystem::create_directories(dir / "images");
  for (const auto& record : manifest.records) render_synthetic_face(manifest, record, options, dir / "images" / record.filename);
  corpus::write_attribute_file(dir / "list_attr.txt", manifest);
  return manifest;
}

}  // namespace cyclehair

#pragma once

// 8-bit RGB canvases, PNG output and the condition grid composite: one
// labeled column per condition, one row per input, each cell the input and
// its translation side by side.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cyclehair/corpus.hpp"

namespace cyclehair {

/// Row-major, interleaved RGB.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int h, int w, std::uint8_t fill = 0) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  std::uint8_t* pixel(int y, int x) { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int y, int x) const { return data.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  bool operator==(const RgbImage&) const = default;
};

/// [-1, 1] channels-first floats to bytes: round((v + 1) * 127.5), clamped.
RgbImage to_rgb(const corpus::Image& image);

/// Throws ImageDecodeError / CheckpointError on I/O failure.
void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

/// Built-in 5x7 glyphs; lowercase renders as uppercase, unknown characters as '?'.
constexpr int kGlyphWidth = 5;
constexpr int kGlyphHeight = 7;
int text_width(std::string_view text, int scale);
void draw_text(RgbImage& canvas, int x, int y, std::string_view text, int scale, const std::uint8_t (&color)[3]);

struct GridLayout {
  std::size_t rows = 0;
  std::vector<std::string> columns;  // condition labels, in column order
  int cell_size = 0;                 // side of one image; a cell holds two
  int glyph_scale = 1;

  int cell_width() const { return 2 * cell_size; }
  int cell_height() const { return cell_size; }
  int header_height() const { return kGlyphHeight * glyph_scale + 8; }
  int width() const { return static_cast<int>(columns.size()) * cell_width(); }
  int height() const { return header_height() + static_cast<int>(rows) * cell_height(); }
};

GridLayout make_grid_layout(std::size_t rows, std::vector<std::string> columns, int cell_size);

/// cells[row][column] = (input, output), every image cell_size square.
/// Throws ShapeError when the cells disagree with the layout.
RgbImage compose_grid(const GridLayout& layout, const std::vector<std::vector<std::pair<RgbImage, RgbImage>>>& cells);

}  // namespace cyclehair

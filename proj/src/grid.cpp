#include "cyclehair/grid.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "cyclehair/errors.hpp"

namespace cyclehair {

namespace {

struct Glyph {
  char symbol;
  const char* rows;  // 7 rows of 5 bits, space separated
};

constexpr std::array<Glyph, 45> kFont{{
    {'A', "01110 10001 10001 11111 10001 10001 10001"}, {'B', "11110 10001 10001 11110 10001 10001 11110"},
    {'C', "01110 10001 10000 10000 10000 10001 01110"}, {'D', "11100 10010 10001 10001 10001 10010 11100"},
    {'E', "11111 10000 10000 11110 10000 10000 11111"}, {'F', "11111 10000 10000 11110 10000 10000 10000"},
    {'G', "01110 10001 10000 10111 10001 10001 01111"}, {'H', "10001 10001 10001 11111 10001 10001 10001"},
    {'I', "01110 00100 00100 00100 00100 00100 01110"}, {'J', "00111 00010 00010 00010 00010 10010 01100"},
    {'K', "10001 10010 10100 11000 10100 10010 10001"}, {'L', "10000 10000 10000 10000 10000 10000 11111"},
    {'M', "10001 11011 10101 10101 10001 10001 10001"}, {'N', "10001 10001 11001 10101 10011 10001 10001"},
    {'O', "01110 10001 10001 10001 10001 10001 01110"}, {'P', "11110 10001 10001 11110 10000 10000 10000"},
    {'Q', "01110 10001 10001 10001 10101 10010 01101"}, {'R', "11110 10001 10001 11110 10100 10010 10001"},
    {'S', "01111 10000 10000 01110 00001 00001 11110"}, {'T', "11111 00100 00100 00100 00100 00100 00100"},
    {'U', "10001 10001 10001 10001 10001 10001 01110"}, {'V', "10001 10001 10001 10001 10001 01010 00100"},
    {'W', "10001 10001 10001 10101 10101 10101 01010"}, {'X', "10001 10001 01010 00100 01010 10001 10001"},
    {'Y', "10001 10001 10001 01010 00100 00100 00100"}, {'Z', "11111 00001 00010 00100 01000 10000 11111"},
    {'0', "01110 10001 10011 10101 11001 10001 01110"}, {'1', "00100 01100 00100 00100 00100 00100 01110"},
    {'2', "01110 10001 00001 00010 00100 01000 11111"}, {'3', "11111 00010 00100 00010 00001 10001 01110"},
    {'4', "00010 00110 01010 10010 11111 00010 00010"}, {'5', "11111 10000 11110 00001 00001 10001 01110"},
    {'6', "00110 01000 10000 11110 10001 10001 01110"}, {'7', "11111 00001 00010 00100 01000 01000 01000"},
    {'8', "01110 10001 10001 01110 10001 10001 01110"}, {'9', "01110 10001 10001 01111 00001 00010 01100"},
    {'-', "00000 00000 00000 11111 00000 00000 00000"}, {'+', "00000 00100 00100 11111 00100 00100 00000"},
    {',', "00000 00000 00000 00000 01100 00100 01000"}, {'.', "00000 00000 00000 00000 00000 01100 01100"},
    {'_', "00000 00000 00000 00000 00000 00000 11111"}, {' ', "00000 00000 00000 00000 00000 00000 00000"},
    {'/', "00001 00001 00010 00100 01000 10000 10000"}, {'=', "00000 00000 11111 00000 11111 00000 00000"},
    {'?', "01110 10001 00001 00010 00100 00000 00100"},
}};

const char* glyph_rows(char c) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : kFont) {
    if (g.symbol == upper) return g.rows;
  }
  return kFont.back().rows;
}

void blit(RgbImage& canvas, const RgbImage& tile, int top, int left) {
  for (int y = 0; y < tile.height; ++y) {
    std::copy_n(tile.pixel(y, 0), static_cast<std::size_t>(tile.width) * 3, canvas.pixel(top + y, left));
  }
}

}  // namespace

RgbImage to_rgb(const corpus::Image& image) {
  if (image.channels != 3) throw ShapeError("to_rgb expects three channels");
  RgbImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::lround((static_cast<double>(image.at(c, y, x)) + 1.0) * 127.5);
        out.pixel(y, x)[c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), bgr)) throw CheckpointError(path.string() + ": cannot write PNG");
}

RgbImage read_png(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageDecodeError(path.string() + ": cannot decode image");
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) std::copy_n(rgb.ptr<std::uint8_t>(y), rgb.cols * 3, out.pixel(y, 0));
  return out;
}

int text_width(std::string_view text, int scale) {
  if (text.empty()) return 0;
  return static_cast<int>(text.size()) * (kGlyphWidth + 1) * scale - scale;
}

void draw_text(RgbImage& canvas, int x, int y, std::string_view text, int scale, const std::uint8_t (&color)[3]) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char* rows = glyph_rows(text[i]);
    const int origin = x + static_cast<int>(i) * (kGlyphWidth + 1) * scale;
    for (int r = 0; r < kGlyphHeight; ++r) {
      for (int c = 0; c < kGlyphWidth; ++c) {
        if (rows[r * (kGlyphWidth + 1) + c] != '1') continue;
        for (int dy = 0; dy < scale; ++dy) {
          for (int dx = 0; dx < scale; ++dx) {
            const int py = y + r * scale + dy;
            const int px = origin + c * scale + dx;
            if (py < 0 || px < 0 || py >= canvas.height || px >= canvas.width) continue;
            std::copy_n(color, 3, canvas.pixel(py, px));
          }
        }
      }
    }
  }
}

GridLayout make_grid_layout(std::size_t rows, std::vector<std::string> columns, int cell_size) {
  if (cell_size <= 0) throw ShapeError("grid cells need a positive size");
  GridLayout layout;
  layout.rows = rows;
  layout.columns = std::move(columns);
  layout.cell_size = cell_size;
  layout.glyph_scale = std::max(1, cell_size / 96);
  return layout;
}

RgbImage compose_grid(const GridLayout& layout, const std::vector<std::vector<std::pair<RgbImage, RgbImage>>>& cells) {
  if (cells.size() != layout.rows) throw ShapeError("grid rows do not match the layout");
  RgbImage canvas(layout.height(), layout.width(), 255);
  static constexpr std::uint8_t kInk[3] = {0, 0, 0};
  for (std::size_t col = 0; col < layout.columns.size(); ++col) {
    const auto& label = layout.columns[col];
    const int left = static_cast<int>(col) * layout.cell_width();
    const int x = left + std::max(0, (layout.cell_width() - text_width(label, layout.glyph_scale)) / 2);
    draw_text(canvas, x, 4, label, layout.glyph_scale, kInk);
  }
  for (std::size_t row = 0; row < cells.size(); ++row) {
    if (cells[row].size() != layout.columns.size()) throw ShapeError("grid columns do not match the layout");
    const int top = layout.header_height() + static_cast<int>(row) * layout.cell_height();
    for (std::size_t col = 0; col < cells[row].size(); ++col) {
      const auto& [input, output] = cells[row][col];
      for (const auto* tile : {&input, &output}) {
        if (tile->height != layout.cell_size || tile->width != layout.cell_size) {
          throw ShapeError("grid cell image is not " + std::to_string(layout.cell_size) + " px square");
        }
      }
      const int left = static_cast<int>(col) * layout.cell_width();
      blit(canvas, input, top, left);
      blit(canvas, output, top, left + layout.cell_size);
    }
  }
  return canvas;
}

}  // namespace cyclehair

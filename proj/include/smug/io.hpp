#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace smug::io {

// Container format shared by datasets, checkpoints and image dumps:
//   8-byte magic | uint64 LE header length | JSON header | float64 LE payload
// The header always carries "payload_doubles"; loaders verify the file size
// against it. Round trips are bit-exact.
void write_blob(const std::string& path, const std::string& magic8,
                nlohmann::json header, std::span<const double> payload);

struct Blob {
  nlohmann::json header;
  std::vector<double> payload;
};

Blob read_blob(const std::string& path, const std::string& magic8, bool header_only = false);

bool file_exists(const std::string& path);

// FNV-1a over the file bytes, as a hex string; used to tie derived outputs
// to the exact dataset they came from.
std::string file_hash(const std::string& path);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Shortest round-trip decimal formatting (std::to_chars); used everywhere a
// double lands in CSV/JSON text so reruns are byte-identical.
std::string format_double(double v);

// Binary PGM (P5, maxval 255) preview of a magnitude image [H,W]; pixels are
// scaled by data_range and clamped.
void write_pgm(const std::string& path, const std::vector<double>& magnitude, int height,
               int width, double data_range);

}  // namespace smug::io

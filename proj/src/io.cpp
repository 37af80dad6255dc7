#include "smug/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "blob payloads are written as little-endian doubles");

namespace smug::io {

void write_blob(const std::string& path, const std::string& magic8, nlohmann::json header,
                std::span<const double> payload) {
  if (magic8.size() != 8) throw std::invalid_argument("write_blob: magic must be 8 bytes");
  header["payload_doubles"] = payload.size();
  const std::string htext = header.dump();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_blob: cannot open " + path + " for writing");
  f.write(magic8.data(), 8);
  const uint64_t hlen = htext.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write_blob: write failed for " + path);
}

Blob read_blob(const std::string& path, const std::string& magic8, bool header_only) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_blob: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, magic8.data(), 8) != 0)
    throw std::runtime_error("read_blob: " + path + ": corrupt header (bad magic, expected '" +
                             magic8 + "')");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  if (!f) throw std::runtime_error("read_blob: " + path + ": corrupt header (truncated length)");
  const uint64_t fsize = std::filesystem::file_size(path);
  if (16 + hlen > fsize)
    throw std::runtime_error("read_blob: " + path + ": corrupt header (declared length " +
                             std::to_string(hlen) + " exceeds file size " +
                             std::to_string(fsize) + ")");
  std::string htext(hlen, '\0');
  f.read(htext.data(), static_cast<std::streamsize>(hlen));
  Blob b;
  try {
    b.header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("read_blob: " + path + ": corrupt header (" + e.what() + ")");
  }
  const uint64_t declared = b.header.value("payload_doubles", uint64_t{0});
  const uint64_t expected_bytes = 16 + hlen + declared * sizeof(double);
  if (expected_bytes != fsize)
    throw std::runtime_error("read_blob: " + path + ": payload length mismatch, expected " +
                             std::to_string(expected_bytes) + " bytes but file has " +
                             std::to_string(fsize) + " bytes");
  if (header_only) return b;
  b.payload.resize(declared);
  f.read(reinterpret_cast<char*>(b.payload.data()),
         static_cast<std::streamsize>(declared * sizeof(double)));
  if (!f) throw std::runtime_error("read_blob: " + path + ": truncated payload");
  return b;
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("file_hash: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) out[i] = hex[(h >> (60 - 4 * i)) & 0xF];
  out[16] = '\0';
  return std::string(out);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_text_file: cannot open " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write_text_file: write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_text_file: cannot open " + path);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, p);
}

void write_pgm(const std::string& path, const std::vector<double>& magnitude, int height,
               int width, double data_range) {
  if (static_cast<size_t>(height) * static_cast<size_t>(width) != magnitude.size())
    throw std::invalid_argument("write_pgm: extent does not match pixel count");
  if (data_range <= 0.0) throw std::invalid_argument("write_pgm: data_range must be positive");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  f << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> px(magnitude.size());
  for (size_t i = 0; i < magnitude.size(); ++i) {
    const double v = std::round(255.0 * magnitude[i] / data_range);
    px[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
  }
  f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!f) throw std::runtime_error("write_pgm: write failed for " + path);
}

}  // namespace smug::io

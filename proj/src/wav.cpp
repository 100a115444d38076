#include "pafa/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace pafa {

namespace {

std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16le(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

WaveBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open wav: " + path.string());

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) throw ParseError("not a RIFF file: " + path.string());
  read_u32le(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) throw ParseError("not a WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;
  while (in.read(tag, 4)) {
    const std::uint32_t size = read_u32le(in);
    if (!in) break;
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16le(in);
      channels = read_u16le(in);
      rate = read_u32le(in);
      read_u32le(in);  // byte rate
      read_u16le(in);  // block align
      bits = read_u16le(in);
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(size);
      in.read(data.data(), size);
      if (!in) throw ParseError("truncated wav data in " + path.string());
      have_data = true;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data) throw ParseError("wav missing fmt/data chunk: " + path.string());
  if (channels < 1) throw ParseError("wav has zero channels: " + path.string());

  WaveBuffer w;
  w.rate_hz = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    const std::size_t n_frames = data.size() / (2u * channels);
    w.samples.resize(n_frames);
    const auto* raw = reinterpret_cast<const unsigned char*>(data.data());
    for (std::size_t i = 0; i < n_frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        const std::size_t off = (i * channels + c) * 2;
        const auto v = static_cast<std::int16_t>(raw[off] | (raw[off + 1] << 8));
        acc += static_cast<double>(v) / 32768.0;
      }
      w.samples[i] = acc / channels;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n_frames = data.size() / (4u * channels);
    w.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, data.data() + (i * channels + c) * 4, 4);
        acc += static_cast<double>(v);
      }
      w.samples[i] = acc / channels;
    }
  } else {
    throw ParseError("unsupported wav encoding (format " + std::to_string(format) + ", " +
                     std::to_string(bits) + " bit) in " + path.string());
  }
  return w;
}

void write_wav16(const std::filesystem::path& path, const WaveBuffer& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open wav for writing: " + path.string());
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;

  out.write("RIFF", 4);
  write_u32le(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32le(out, 16);
  write_u16le(out, 1);  // PCM
  write_u16le(out, 1);  // mono
  write_u32le(out, static_cast<std::uint32_t>(w.rate_hz));
  write_u32le(out, static_cast<std::uint32_t>(w.rate_hz) * 2);
  write_u16le(out, 2);
  write_u16le(out, 16);
  out.write("data", 4);
  write_u32le(out, data_bytes);
  for (double s : w.samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
    write_u16le(out, static_cast<std::uint16_t>(v));
  }
  if (!out) throw IoError("wav write failed: " + path.string());
}

}  // namespace pafa

#include "rfl/data.hpp"

#include <zlib.h>

#include <array>
#include <fstream>
#include <iterator>

namespace rfl {
namespace {

std::vector<std::uint8_t> read_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IdxFormatError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  while (true) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      gzclose(file);
      throw IdxFormatError("corrupt gzip stream in " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return out;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxFormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return read_gzip(path);
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::string& name) {
  if (bytes.size() < offset + 4) throw IdxFormatError(name + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes, bool gzip) {
  if (gzip) {
    gzFile file = gzopen(path.c_str(), "wb");
    if (file == nullptr) throw std::runtime_error("cannot write " + path.string());
    const int n = gzwrite(file, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(file);
    if (n != static_cast<int>(bytes.size())) throw std::runtime_error("short write to " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  const std::uint32_t magic = read_be32(bytes, 0, name);
  if (magic != kIdxImageMagic) throw IdxFormatError(name + ": bad magic number for IDX images");
  IdxImages images;
  images.count = read_be32(bytes, 4, name);
  images.rows = read_be32(bytes, 8, name);
  images.cols = read_be32(bytes, 12, name);
  const std::size_t payload = std::size_t{images.count} * images.rows * images.cols;
  if (bytes.size() < 16 + payload) throw IdxFormatError(name + ": truncated image payload");
  images.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return images;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  if (read_be32(bytes, 0, name) != kIdxLabelMagic) throw IdxFormatError(name + ": bad magic number for IDX labels");
  const std::uint32_t count = read_be32(bytes, 4, name);
  if (bytes.size() < 8 + std::size_t{count}) throw IdxFormatError(name + ": truncated label payload");
  return {bytes.begin() + 8, bytes.begin() + 8 + count};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images, bool gzip) {
  if (images.pixels.size() != std::size_t{images.count} * images.rows * images.cols) {
    throw std::invalid_argument("write_idx_images: pixel buffer does not match dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_be32(out, kIdxImageMagic);
  put_be32(out, images.count);
  put_be32(out, images.rows);
  put_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  write_bytes(path, out, gzip);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels, bool gzip) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_bytes(path, out, gzip);
}

Dataset images_to_dataset(const IdxImages& images, const std::vector<std::uint8_t>& digits) {
  if (images.count != digits.size()) {
    throw IdxFormatError("image/label count mismatch: " + std::to_string(images.count) + " images, " +
                         std::to_string(digits.size()) + " labels");
  }
  const Index n = images.count;
  const Index pixels = Index{images.rows} * images.cols;
  Matrix<double> x(n, pixels + 1);
  Vector<double> y(n);
  for (Index i = 0; i < n; ++i) {
    const std::uint8_t* row = images.pixels.data() + i * pixels;
    for (Index k = 0; k < pixels; ++k) x(i, k) = static_cast<double>(row[k]) / 255.0;
    x(i, pixels) = 1.0;
    y[i] = parity_label(digits[static_cast<std::size_t>(i)]);
  }
  return {std::move(x), std::move(y)};
}

Dataset ingest_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return images_to_dataset(read_idx_images(images_path), read_idx_labels(labels_path));
}

}  // namespace rfl

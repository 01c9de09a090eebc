#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "driftlab/data.hpp"
#include "driftlab/errors.hpp"

namespace driftlab {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr char kDlbMagic[4] = {'D', 'L', 'B', '1'};
constexpr std::size_t kDlbHeader = 16;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

class Reader {
 public:
  Reader(std::span<const unsigned char> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const noexcept { return pos_; }

  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated while reading " + field, pos_);
    }
  }
  std::uint32_t u32_be(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }
  std::uint32_t u32_le(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64_le(const char* field) {
    need(8, field);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  unsigned char byte(const char* field) {
    need(1, field);
    return bytes_[pos_++];
  }

 private:
  std::span<const unsigned char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

struct DlbHeader {
  std::size_t image_size;
  std::size_t classes;
  std::size_t count;
};

DlbHeader read_dlb_header(Reader& r, std::span<const unsigned char> bytes) {
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kDlbMagic, 4) != 0) throw FormatError("not a DLB1 dataset file", 0);
  for (int i = 0; i < 4; ++i) r.byte("magic");
  DlbHeader h{};
  h.image_size = r.u32_le("image size");
  h.classes = r.u32_le("class count");
  h.count = r.u32_le("sample count");
  if (h.image_size == 0 || h.count == 0) throw FormatError("DLB1 header has a zero dimension", 4);
  return h;
}

std::vector<double> read_dlb_pixels(Reader& r, const DlbHeader& h) {
  const std::size_t n = h.count * h.image_size * h.image_size;
  r.need(n * 8, "pixel block");
  std::vector<double> pixels(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t at = r.offset();
    const double v = std::bit_cast<double>(r.u64_le("pixel"));
    if (!(v >= 0.0 && v <= 1.0)) throw FormatError("pixel outside [0, 1]", at);
    pixels[k] = v;
  }
  return pixels;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 DatasetRole role) {
  const auto img_bytes = read_file(images_path);
  const auto lbl_bytes = read_file(labels_path);

  Reader ri(img_bytes, images_path.string());
  if (ri.u32_be("magic") != kIdxImagesMagic) {
    throw FormatError(images_path.string() + ": bad magic for IDX images (expected 0x00000803)", 0);
  }
  const std::size_t count = ri.u32_be("image count");
  const std::size_t rows = ri.u32_be("row count");
  const std::size_t cols = ri.u32_be("column count");
  if (rows != cols || rows == 0) {
    throw FormatError(images_path.string() + ": images must be square and non-empty", 8);
  }
  if (count == 0) throw FormatError(images_path.string() + ": no images", 4);

  Reader rl(lbl_bytes, labels_path.string());
  if (rl.u32_be("magic") != kIdxLabelsMagic) {
    throw FormatError(labels_path.string() + ": bad magic for IDX labels (expected 0x00000801)", 0);
  }
  const std::size_t label_count = rl.u32_be("label count");
  if (label_count != count) {
    throw FormatError(labels_path.string() + ": " + std::to_string(label_count) +
                          " labels for " + std::to_string(count) + " images",
                      4);
  }

  ri.need(count * rows * cols, "pixel data");
  std::vector<double> pixels(count * rows * cols);
  for (double& p : pixels) p = static_cast<double>(ri.byte("pixel")) / 255.0;

  rl.need(count, "label data");
  std::vector<int> labels(count);
  int max_label = 0;
  for (int& l : labels) {
    l = rl.byte("label");
    max_label = std::max(max_label, l);
  }
  return Dataset(rows, static_cast<std::size_t>(max_label) + 1, std::move(pixels), std::move(labels), role);
}

std::vector<unsigned char> encode_dlb(const Dataset& data) {
  std::vector<unsigned char> out;
  out.reserve(kDlbHeader + data.pixels().size() * 8 + data.size() * 4);
  out.insert(out.end(), kDlbMagic, kDlbMagic + 4);
  put_u32_le(out, static_cast<std::uint32_t>(data.image_size()));
  put_u32_le(out, static_cast<std::uint32_t>(data.num_classes()));
  put_u32_le(out, static_cast<std::uint32_t>(data.size()));
  for (double v : data.pixels()) put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  for (int l : data.labels()) put_u32_le(out, static_cast<std::uint32_t>(l));
  return out;
}

Dataset decode_dlb(std::span<const unsigned char> bytes, DatasetRole role) {
  Reader r(bytes, "DLB1");
  const DlbHeader h = read_dlb_header(r, bytes);
  auto pixels = read_dlb_pixels(r, h);
  r.need(h.count * 4, "label block");
  std::vector<int> labels(h.count);
  for (int& l : labels) {
    const std::size_t at = r.offset();
    const std::uint32_t v = r.u32_le("label");
    if (v >= h.classes) throw FormatError("label " + std::to_string(v) + " outside class range", at);
    l = static_cast<int>(v);
  }
  return Dataset(h.image_size, h.classes, std::move(pixels), std::move(labels), role);
}

ImageSet decode_dlb_images(std::span<const unsigned char> bytes) {
  Reader r(bytes, "DLB1");
  const DlbHeader h = read_dlb_header(r, bytes);
  return ImageSet(h.image_size, read_dlb_pixels(r, h));
}

void write_dlb(const Dataset& data, const std::filesystem::path& path) { write_file(path, encode_dlb(data)); }

Dataset read_dlb(const std::filesystem::path& path, DatasetRole role) {
  const auto bytes = read_file(path);
  try {
    return decode_dlb(bytes, role);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

ImageSet read_dlb_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_dlb_images(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
}

}  // namespace driftlab

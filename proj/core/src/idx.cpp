#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "cfl/data.hpp"

namespace cfl {

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open IDX file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class BigEndianReader {
 public:
  BigEndianReader(const std::vector<unsigned char>& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                      (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
    pos_ += 4;
    return v;
  }

  const unsigned char* take(std::size_t n) {
    need(n);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      std::ostringstream msg;
      msg << "truncated IDX file " << path_.string() << ": need " << n << " bytes at offset " << pos_
          << ", have " << bytes_.size() - pos_;
      throw IdxError(IdxError::Kind::truncated, msg.str());
    }
  }

  const std::vector<unsigned char>& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    std::ostringstream msg;
    msg << "bad IDX magic in " << path.string() << ": 0x" << std::hex << got << ", expected 0x" << want;
    throw IdxError(IdxError::Kind::bad_magic, msg.str());
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  auto image_bytes = read_all(images_path);
  auto label_bytes = read_all(labels_path);

  BigEndianReader images(image_bytes, images_path);
  expect_magic(images.u32(), kIdxImagesMagic, images_path);
  const std::uint32_t n_images = images.u32();
  const std::uint32_t rows = images.u32();
  const std::uint32_t cols = images.u32();

  BigEndianReader labels(label_bytes, labels_path);
  expect_magic(labels.u32(), kIdxLabelsMagic, labels_path);
  const std::uint32_t n_labels = labels.u32();

  if (n_images != n_labels) {
    throw IdxError(IdxError::Kind::count_mismatch, "IDX count mismatch: " + std::to_string(n_images) +
                                                       " images vs " + std::to_string(n_labels) + " labels");
  }

  const std::size_t width = static_cast<std::size_t>(rows) * cols;
  const unsigned char* pixels = images.take(static_cast<std::size_t>(n_images) * width);
  const unsigned char* raw_labels = labels.take(n_labels);

  Matrix features(n_images, width);
  for (std::size_t i = 0; i < features.data().size(); ++i) features.data()[i] = pixels[i] / 255.0;
  std::vector<int> y(raw_labels, raw_labels + n_labels);
  int n_classes = y.empty() ? 1 : *std::max_element(y.begin(), y.end()) + 1;
  return Dataset(std::move(features), std::move(y), n_classes);
}

}  // namespace cfl

#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace hyperseg {

/// Row-major height x width x channels array of scalars. Used for feature
/// grids, embedding grids and logit grids alike.
template <class T>
class Field {
 public:
  Field() = default;
  Field(std::size_t height, std::size_t width, std::size_t channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        data_(height * width * channels, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixels() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> pixel(std::size_t index) {
    return {data_.data() + index * channels_, channels_};
  }
  std::span<const T> pixel(std::size_t index) const {
    return {data_.data() + index * channels_, channels_};
  }
  std::span<T> pixel(std::size_t row, std::size_t col) { return pixel(row * width_ + col); }
  std::span<const T> pixel(std::size_t row, std::size_t col) const {
    return pixel(row * width_ + col);
  }

  T& operator()(std::size_t row, std::size_t col, std::size_t ch) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  const T& operator()(std::size_t row, std::size_t col, std::size_t ch) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Field& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

/// Row-major height x width map of one value per pixel.
template <class T>
class Map2D {
 public:
  Map2D() = default;
  Map2D(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  T& operator()(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }
  const T& operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Map2D&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> data_;
};

}  // namespace hyperseg

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pkm/matrix.hpp"

namespace pkm::data {

/// The random-label memorization dataset: N points uniform in the unit cube
/// with uniformly chosen class labels. Fully determined by (n, dim, classes,
/// seed); the training set doubles as the evaluation set.
struct RandomLabelDataset {
  std::size_t n = 0;
  std::size_t dim = 8;
  std::size_t classes = 10;
  std::uint64_t seed = 0;
  DenseMatrix points;                 // n x dim, entries in [0, 1)
  std::vector<std::uint32_t> labels;  // n, each < classes
  std::size_t duplicate_points = 0;   // detected and reported, never an error
};

RandomLabelDataset generate(std::size_t n, std::size_t dim, std::size_t classes,
                            std::uint64_t seed);

/// Binary fixture dump: header, f32 rows, u16 labels. Little-endian.
void dump(const RandomLabelDataset& ds, const std::filesystem::path& path);
RandomLabelDataset load_dump(const std::filesystem::path& path);

}  // namespace pkm::data

#pragma once

#include "rfl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rfl {

// ---------------------------------------------------------------------------
// IDX files (big-endian headers, unsigned byte payload). Reading accepts raw
// and gzip-compressed files; the gzip magic is sniffed from the first bytes.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

class IdxFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // row-major, count * rows * cols
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images, bool gzip = false);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                      bool gzip = false);

/// +1 for even digits, -1 for odd.
constexpr int parity_label(std::uint8_t digit) { return digit % 2 == 0 ? 1 : -1; }

/// Pixels scaled by 1/255 with a trailing bias feature of 1.
Dataset images_to_dataset(const IdxImages& images, const std::vector<std::uint8_t>& digits);

Dataset ingest_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

// ---------------------------------------------------------------------------
// Partitioning

struct PartitionPlan {
  std::vector<std::vector<Index>> node_shards;
  std::uint64_t seed = 0;

  std::size_t nodes() const { return node_shards.size(); }
};

/// Random permutation of 0..n_samples-1 split into n_nodes shards whose sizes
/// differ by at most one (the first n_samples % n_nodes shards are larger).
PartitionPlan partition_iid(Index n_samples, Index n_nodes, std::uint64_t seed);

Dataset select_rows(const Dataset& data, const std::vector<Index>& rows);
std::vector<Dataset> make_shards(const Dataset& data, const PartitionPlan& plan);

/// First `count` rows of a seeded permutation. count >= size returns a copy.
Dataset subsample(const Dataset& data, Index count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic convex problems

struct SyntheticSpec {
  Index dim = 10;        // includes the bias coordinate
  Index samples = 500;
  double margin = 0.1;   // reject draws with |<w*, x>| < margin
  double flip_prob = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticProblem {
  Dataset data;
  Vector<double> ground_truth;  // unit vector w*
};

/// Gaussian features (bias appended), labels sign(<w*, x>) with margin
/// rejection, then independent flips with probability flip_prob.
SyntheticProblem generate_synthetic_problem(const SyntheticSpec& spec);
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace rfl

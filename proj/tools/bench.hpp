#pragma once

// Attention timing harness. The canonical softmax(QK^T)V control lives here
// only; the model never materializes a T x T or N x N attention matrix.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace imputeformer::bench {

enum class Attention { temporal, spatial };

Attention parse_attention(const std::string& name);

struct BenchOptions {
  Attention attention = Attention::temporal;
  std::vector<std::size_t> sizes{256, 512};  // T for temporal, N for spatial
  std::size_t reps = 5;
  std::size_t model_dim = 32;
  std::size_t projected_dim = 6;     // C
  std::size_t embed_key_dim = 8;     // D_emb
  std::size_t other_extent = 8;      // N for temporal, T for spatial
  bool control = true;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t size = 0;
  double factorized_ms = 0.0;  // median over reps
  double canonical_ms = 0.0;   // NaN without the control
};

std::vector<BenchRow> run(const BenchOptions& opts);

}  // namespace imputeformer::bench

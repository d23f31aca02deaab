#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dyml/common.hpp"

namespace dyml {

// Embedding vectors are plain Vec with unit L2 norm; every function that
// produces one normalizes, every consumer may assume |v| = 1.

// Throws DegenerateEmbedding if |v| is numerically zero.
Vec normalize_unit(Vec v);

// Dot product of unit vectors. Throws DimensionMismatch.
double cosine(const Vec& a, const Vec& b);

// entry (q, g) = cosine(queries[q], gallery[g]); rows are queries.
// Single fixed summation order, so results are bitwise reproducible.
Matrix similarity_matrix(const Matrix& queries, const Matrix& gallery);

// ---------------------------------------------------------------------------
// Embedding map: linear (or two-layer with ReLU) followed by L2
// normalization. Desk-scale stand-in for a deep backbone; all arithmetic is
// double, float features are widened on entry.
// ---------------------------------------------------------------------------

struct EmbeddingModel {
  int d_in = 0;
  int d_out = 0;
  bool two_layer = false;
  int hidden = 0;
  bool use_bias = false;

  Matrix w1;  // two_layer ? hidden x d_in : d_out x d_in
  Vec b1;
  Matrix w2;  // d_out x hidden, two_layer only
  Vec b2;
};

EmbeddingModel init_model(int d_in, int d_out, bool two_layer, int hidden, bool use_bias,
                          std::uint64_t seed);

struct ForwardCache {
  Vec hidden;      // post-ReLU, two_layer only
  Vec pre_norm;    // y
  Vec embedding;   // y / |y|
  double y_norm = 0.0;
};

// Gradients with respect to model parameters; same shapes as the model.
struct ModelGrads {
  Matrix w1;
  Vec b1;
  Matrix w2;
  Vec b2;

  static ModelGrads zeros_like(const EmbeddingModel& m);
  void scale(double a);
  void accumulate_scaled(const ModelGrads& g, double a);  // this += a*g
};

void forward(const EmbeddingModel& m, const double* x, ForwardCache& cache);
Vec embed(const EmbeddingModel& m, const Vec& features);
Vec embed(const EmbeddingModel& m, const std::vector<float>& features);
Vec widen(const std::vector<float>& features);

// Chain rule through normalization and the affine map(s); accumulates into
// grads. grad_embedding is dL/d(normalized output).
void backward(const EmbeddingModel& m, const double* x, const ForwardCache& cache,
              const double* grad_embedding, ModelGrads& grads);

// d(embedding)/d(input features), d_out x d_in. Used by the Jacobian checks.
Matrix embed_input_jacobian(const EmbeddingModel& m, const Vec& features);

// Dump format: magic "DYME1", u32 count, u32 d, then count*d little-endian
// f64 values row-major.
void write_embeddings(const std::string& path, const Matrix& e);
Matrix read_embeddings(const std::string& path);

}  // namespace dyml

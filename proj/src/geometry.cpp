#include "dyml/geometry.hpp"

#include <algorithm>

namespace dyml {

Vec normalize_unit(Vec v) {
  const double n = norm2(v.data(), v.size());
  if (n < 1e-12) throw DegenerateEmbedding("zero vector cannot be normalized");
  scale_inplace(1.0 / n, v.data(), v.size());
  return v;
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("cosine of " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  return dot(a.data(), b.data(), a.size());
}

Matrix similarity_matrix(const Matrix& queries, const Matrix& gallery) {
  if (queries.rows() == 0 || gallery.rows() == 0)
    throw EmptyGallery("similarity_matrix needs nonempty inputs");
  if (queries.cols() != gallery.cols())
    throw DimensionMismatch("similarity_matrix dims " + std::to_string(queries.cols()) + " vs " +
                            std::to_string(gallery.cols()));
  Matrix out(queries.rows(), gallery.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q)
    for (std::size_t g = 0; g < gallery.rows(); ++g)
      out(q, g) = dot(queries.row(q), gallery.row(g), queries.cols());
  return out;
}

EmbeddingModel init_model(int d_in, int d_out, bool two_layer, int hidden, bool use_bias,
                          std::uint64_t seed) {
  if (d_in < 1 || d_out < 2) throw InvalidDimension("embedding needs d_in >= 1, d_out >= 2");
  if (two_layer && hidden < 1) throw InvalidDimension("two-layer model needs hidden >= 1");
  EmbeddingModel m;
  m.d_in = d_in;
  m.d_out = d_out;
  m.two_layer = two_layer;
  m.hidden = two_layer ? hidden : 0;
  m.use_bias = use_bias;
  Rng rng(seed);
  auto gaussian = [&](Matrix& w, std::size_t rows, std::size_t cols) {
    w = Matrix(rows, cols);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) w(r, c) = std_dev * rng.normal();
  };
  if (two_layer) {
    gaussian(m.w1, hidden, d_in);
    gaussian(m.w2, d_out, hidden);
    if (use_bias) {
      m.b1.assign(hidden, 0.0);
      m.b2.assign(d_out, 0.0);
    }
  } else {
    gaussian(m.w1, d_out, d_in);
    if (use_bias) m.b1.assign(d_out, 0.0);
  }
  return m;
}

ModelGrads ModelGrads::zeros_like(const EmbeddingModel& m) {
  ModelGrads g;
  g.w1 = Matrix(m.w1.rows(), m.w1.cols());
  g.b1.assign(m.b1.size(), 0.0);
  g.w2 = Matrix(m.w2.rows(), m.w2.cols());
  g.b2.assign(m.b2.size(), 0.0);
  return g;
}

void ModelGrads::scale(double a) {
  scale_inplace(a, w1.data().data(), w1.data().size());
  scale_inplace(a, b1.data(), b1.size());
  scale_inplace(a, w2.data().data(), w2.data().size());
  scale_inplace(a, b2.data(), b2.size());
}

void ModelGrads::accumulate_scaled(const ModelGrads& g, double a) {
  axpy(a, g.w1.data().data(), w1.data().data(), w1.data().size());
  axpy(a, g.b1.data(), b1.data(), b1.size());
  axpy(a, g.w2.data().data(), w2.data().data(), w2.data().size());
  axpy(a, g.b2.data(), b2.data(), b2.size());
}

namespace {

void affine(const Matrix& w, const Vec& b, const double* in, Vec& out) {
  out.assign(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    double s = b.empty() ? 0.0 : b[r];
    const double* wr = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) s += wr[c] * in[c];
    out[r] = s;
  }
}

}  // namespace

void forward(const EmbeddingModel& m, const double* x, ForwardCache& cache) {
  if (m.two_layer) {
    affine(m.w1, m.b1, x, cache.hidden);
    for (double& h : cache.hidden) h = std::max(0.0, h);
    affine(m.w2, m.b2, cache.hidden.data(), cache.pre_norm);
  } else {
    affine(m.w1, m.b1, x, cache.pre_norm);
  }
  cache.y_norm = norm2(cache.pre_norm.data(), cache.pre_norm.size());
  if (cache.y_norm < 1e-12) throw DegenerateEmbedding("model output collapsed to zero");
  cache.embedding = cache.pre_norm;
  scale_inplace(1.0 / cache.y_norm, cache.embedding.data(), cache.embedding.size());
}

Vec widen(const std::vector<float>& features) {
  Vec x(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) x[i] = static_cast<double>(features[i]);
  return x;
}

Vec embed(const EmbeddingModel& m, const Vec& features) {
  if (static_cast<int>(features.size()) != m.d_in)
    throw DimensionMismatch("embed: feature dim " + std::to_string(features.size()) +
                            " != d_in " + std::to_string(m.d_in));
  ForwardCache cache;
  forward(m, features.data(), cache);
  return cache.embedding;
}

Vec embed(const EmbeddingModel& m, const std::vector<float>& features) {
  return embed(m, widen(features));
}

void backward(const EmbeddingModel& m, const double* x, const ForwardCache& cache,
              const double* grad_embedding, ModelGrads& grads) {
  const std::size_t d = cache.embedding.size();
  // e = y/|y|  =>  dL/dy = (g - (e.g) e) / |y|
  const double radial = dot(cache.embedding.data(), grad_embedding, d);
  Vec grad_y(d);
  for (std::size_t i = 0; i < d; ++i)
    grad_y[i] = (grad_embedding[i] - radial * cache.embedding[i]) / cache.y_norm;

  if (m.two_layer) {
    for (std::size_t r = 0; r < m.w2.rows(); ++r) {
      axpy(grad_y[r], cache.hidden.data(), grads.w2.row(r), m.w2.cols());
      if (!grads.b2.empty()) grads.b2[r] += grad_y[r];
    }
    Vec grad_h(m.hidden, 0.0);
    for (std::size_t r = 0; r < m.w2.rows(); ++r)
      axpy(grad_y[r], m.w2.row(r), grad_h.data(), m.w2.cols());
    for (int i = 0; i < m.hidden; ++i)
      if (cache.hidden[i] <= 0.0) grad_h[i] = 0.0;
    for (std::size_t r = 0; r < m.w1.rows(); ++r) {
      axpy(grad_h[r], x, grads.w1.row(r), m.w1.cols());
      if (!grads.b1.empty()) grads.b1[r] += grad_h[r];
    }
  } else {
    for (std::size_t r = 0; r < m.w1.rows(); ++r) {
      axpy(grad_y[r], x, grads.w1.row(r), m.w1.cols());
      if (!grads.b1.empty()) grads.b1[r] += grad_y[r];
    }
  }
}

Matrix embed_input_jacobian(const EmbeddingModel& m, const Vec& features) {
  if (static_cast<int>(features.size()) != m.d_in)
    throw DimensionMismatch("jacobian: feature dim mismatch");
  ForwardCache cache;
  forward(m, features.data(), cache);
  const std::size_t d = cache.embedding.size();

  // dy/dx of the affine stack
  Matrix j_affine(d, m.d_in);
  if (m.two_layer) {
    for (std::size_t r = 0; r < d; ++r)
      for (int c = 0; c < m.d_in; ++c) {
        double s = 0.0;
        for (int h = 0; h < m.hidden; ++h)
          if (cache.hidden[h] > 0.0) s += m.w2(r, h) * m.w1(h, c);
        j_affine(r, c) = s;
      }
  } else {
    j_affine = m.w1;
  }
  // d(e)/dy = (I - e e^T)/|y|
  Matrix j(d, m.d_in);
  for (std::size_t r = 0; r < d; ++r)
    for (int c = 0; c < m.d_in; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double proj = ((r == k) ? 1.0 : 0.0) - cache.embedding[r] * cache.embedding[k];
        s += proj * j_affine(k, c);
      }
      j(r, c) = s / cache.y_norm;
    }
  return j;
}

void write_embeddings(const std::string& path, const Matrix& e) {
  BinWriter w(path);
  w.magic("DYME1");
  w.u32(static_cast<std::uint32_t>(e.rows()));
  w.u32(static_cast<std::uint32_t>(e.cols()));
  w.f64_array(e.data().data(), e.data().size());
  w.close();
}

Matrix read_embeddings(const std::string& path) {
  BinReader r(path);
  r.expect_magic("DYME1");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  Matrix e(n, d);
  r.f64_array(e.data().data(), e.data().size());
  return e;
}

}  // namespace dyml

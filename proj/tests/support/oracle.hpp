#pragma once

// Brute-force reference implementations for tests. Plain nested vectors and
// long double accumulation; nothing here calls into the library kernels.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cta/encoder.hpp"
#include "cta/linalg.hpp"
#include "cta/mha.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat from(const cta::Matrix<double>& m) {
  Mat out(m.rows(), Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

inline Vec from(const cta::Vector<double>& v) { return Vec(v.begin(), v.end()); }

inline Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t inner = b.size();
  const std::size_t cols = b.empty() ? 0 : b[0].size();
  Mat out(a.size(), Vec(cols, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != inner) throw std::invalid_argument("oracle matmul shape");
    for (std::size_t j = 0; j < cols; ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < inner; ++k) acc += static_cast<long double>(a[i][k]) * b[k][j];
      out[i][j] = static_cast<double>(acc);
    }
  }
  return out;
}

/// softmax(q K^T / sqrt(d)) V for one query.
inline Vec softmax_row(const Vec& q, const Mat& k, const Mat& v) {
  const long double s = 1.0L / std::sqrt(static_cast<long double>(q.size()));
  std::vector<long double> w(k.size());
  long double total = 0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    long double dotp = 0;
    for (std::size_t c = 0; c < q.size(); ++c) dotp += static_cast<long double>(q[c]) * k[i][c];
    w[i] = std::exp(dotp * s);
    total += w[i];
  }
  Vec out(v[0].size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    long double acc = 0;
    for (std::size_t i = 0; i < k.size(); ++i) acc += w[i] * v[i][c];
    out[c] = static_cast<double>(acc / total);
  }
  return out;
}

inline Mat attention(const Mat& q, const Mat& k, const Mat& v) {
  Mat out;
  for (const auto& row : q) out.push_back(softmax_row(row, k, v));
  return out;
}

struct Mha {
  std::vector<Mat> w_q, w_k, w_v;
  Mat w_o;
};

inline Mat mha(const Mha& w, const Mat& q, const Mat& k, const Mat& v) {
  const std::size_t h = w.w_q.size();
  Mat concat(q.size());
  for (std::size_t i = 0; i < h; ++i) {
    const Mat head = attention(matmul(q, w.w_q[i]), matmul(k, w.w_k[i]), matmul(v, w.w_v[i]));
    for (std::size_t r = 0; r < q.size(); ++r) {
      concat[r].insert(concat[r].end(), head[r].begin(), head[r].end());
    }
  }
  return matmul(concat, w.w_o);
}

inline Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps = 1e-5) {
  long double mean = 0;
  for (double v : x) mean += v;
  mean /= x.size();
  long double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= x.size();
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<double>((x[i] - mean) / std::sqrt(var + eps) * gain[i] + bias[i]);
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

struct Block {
  Mha mha;
  Mat w1, w2;
  Vec b1, b2, ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

inline Vec feed_forward(const Block& b, const Vec& x) {
  Vec hidden = matmul(Mat{x}, b.w1)[0];
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = gelu(hidden[i] + b.b1[i]);
  Vec out = matmul(Mat{hidden}, b.w2)[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.b2[i];
  return out;
}

inline Mat encoder_block(const Block& b, const Mat& x) {
  const Mat att = mha(b.mha, x, x, x);
  Mat out;
  for (std::size_t r = 0; r < x.size(); ++r) {
    Vec s(x[r].size());
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = x[r][c] + att[r][c];
    const Vec y = layer_norm(s, b.ln1_gain, b.ln1_bias);
    const Vec f = feed_forward(b, y);
    for (std::size_t c = 0; c < s.size(); ++c) s[c] = y[c] + f[c];
    out.push_back(layer_norm(s, b.ln2_gain, b.ln2_bias));
  }
  return out;
}

inline Mat sinusoid_table(std::size_t tokens, std::size_t d) {
  Mat p(tokens, Vec(d));
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t c = 0; c < d; ++c) {
      const double freq = std::pow(10000.0, static_cast<double>(c - c % 2) / d);
      p[i][c] = c % 2 == 0 ? std::sin(i / freq) : std::cos(i / freq);
    }
  }
  return p;
}

/// Encoder stack over one window with recycled positions starting at tau0 and
/// an optional class token appended before block `cls_before`.
inline Vec model(const std::vector<Block>& blocks, const Mat& table, std::size_t tau0, Mat x,
                 std::optional<std::size_t> cls_before, const Vec& cls) {
  for (std::size_t t = 0; t < x.size(); ++t) {
    const Vec& p = table[(tau0 + t) % table.size()];
    for (std::size_t c = 0; c < p.size(); ++c) x[t][c] += p[c];
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (cls_before && *cls_before == b) x.push_back(cls);
    x = encoder_block(blocks[b], x);
  }
  return x.back();
}

/// max |a - b| / max |b| over all entries.
inline double rel_error(const Mat& a, const Mat& b) {
  double num = 0, den = 0;
  for (std::size_t r = 0; r < b.size(); ++r) {
    for (std::size_t c = 0; c < b[r].size(); ++c) {
      num = std::max(num, std::abs(a.at(r).at(c) - b[r][c]));
      den = std::max(den, std::abs(b[r][c]));
    }
  }
  return den == 0 ? num : num / den;
}

inline double rel_error(const Vec& a, const Vec& b) { return rel_error(Mat{a}, Mat{b}); }

// Closed-form operation counts, tallied by hand from the loop structure of
// each algorithm (dot products of length d cost d mults and d-1 adds).
struct Counts {
  unsigned long long mults, adds, exps;
};

inline Counts regular_counts(unsigned long long n, unsigned long long d) {
  return {2 * n * n * d + 2 * n * d, 2 * n * n * d - n * d - n, n * n};
}
inline Counts cosi_counts(unsigned long long n, unsigned long long d) {
  return {2 * n * d + 2 * d, 2 * n * d - d - 1, n};
}
// Retroactive step on a warm state, by stage:
//   n-1 cached rows: 2 dots, 2 denominator adds, 2d numerator adds
//   newest row: n dots, n-1 sum adds, (n-1)d accumulation adds
// giving 4(n-1)d + 2nd - d - 1 adds.
inline Counts core_counts_derived(unsigned long long n, unsigned long long d) {
  return {7 * n * d + 2 * n - 3 * d, 6 * n * d - 5 * d - 1, 3 * n - 2};
}
inline Counts core_counts_published(unsigned long long n, unsigned long long d) {
  return {7 * n * d + 2 * n - 3 * d, 6 * n * d + 3 * n - 6 * d - 3, 3 * n - 2};
}

inline Mha from(const cta::MhaWeights<double>& w) {
  Mha out;
  for (const auto& m : w.w_q) out.w_q.push_back(from(m));
  for (const auto& m : w.w_k) out.w_k.push_back(from(m));
  for (const auto& m : w.w_v) out.w_v.push_back(from(m));
  out.w_o = from(w.w_o);
  return out;
}

inline Block from(const cta::EncoderWeights<double>& w) {
  return {from(w.mha), from(w.w1), from(w.w2), from(w.b1), from(w.b2),
          from(w.ln1_gain), from(w.ln1_bias), from(w.ln2_gain), from(w.ln2_bias)};
}

}  // namespace oracle

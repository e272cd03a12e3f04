#include "eir/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eir/augment.hpp"
#include "eir/error.hpp"
#include "eir/losses.hpp"
#include "eir/rng.hpp"

namespace eir {

void validate_index(const EvalIndex& index) {
  if (index.size() == 0) throw_config("eval index: empty");
  if (index.features.rank() != 2) throw_dimension("eval index: features must be [M x D]");
  if (index.labels.size() != index.size())
    throw_dimension("eval index: label count mismatch");
  const std::size_t d = index.dim();
  for (std::size_t i = 0; i < index.size(); ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += index.features[i * d + j] * index.features[i * d + j];
    if (std::abs(std::sqrt(ss) - 1.0) > 1e-6)
      throw_numeric("eval index: row " + std::to_string(i) + " is not unit-norm");
    if (index.labels[i] < 0) throw_parameter("eval index: negative label");
  }
}

namespace {

// Neighbour order: higher similarity first, smaller row index on ties.
std::vector<std::size_t> top_neighbours(const std::vector<double>& sims, std::size_t k,
                                        long exclude = -1) {
  std::vector<std::size_t> order;
  order.reserve(sims.size());
  for (std::size_t i = 0; i < sims.size(); ++i)
    if (static_cast<long>(i) != exclude) order.push_back(i);
  std::partial_sort(order.begin(), order.begin() + std::min(k, order.size()), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sims[a] != sims[b]) return sims[a] > sims[b];
                      return a < b;
                    });
  order.resize(std::min(k, order.size()));
  return order;
}

std::vector<double> similarities(const double* query, const EvalIndex& index) {
  const std::size_t m = index.size(), d = index.dim();
  std::vector<double> sims(m);
  for (std::size_t i = 0; i < m; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += index.features[i * d + j] * query[j];
    sims[i] = dot;
  }
  return sims;
}

}  // namespace

int knn_classify(const double* query, std::size_t dim, const EvalIndex& index, std::size_t k,
                 double tau, bool weighted) {
  if (index.size() == 0) throw_config("knn_classify: empty index");
  if (dim != index.dim()) throw_dimension("knn_classify: query dimension mismatch");
  if (k == 0 || k > index.size())
    throw_parameter("knn_classify: k must be in [1, M], got " + std::to_string(k));
  if (!(tau > 0.0)) throw_parameter("knn_classify: tau must be positive");
  const std::vector<double> sims = similarities(query, index);
  std::map<int, double> votes;
  for (std::size_t n : top_neighbours(sims, k)) {
    const double w = weighted ? std::exp(sims[n] / tau) : 1.0;
    votes[index.labels[n]] += w;
  }
  int best = -1;
  double best_vote = -1.0;
  for (const auto& [label, vote] : votes) {  // ascending labels: ties keep the smaller id
    if (vote > best_vote) {
      best = label;
      best_vote = vote;
    }
  }
  return best;
}

double knn_accuracy(const EvalIndex& test, const EvalIndex& train, std::size_t k, double tau,
                    bool weighted) {
  validate_index(test);
  validate_index(train);
  if (test.dim() != train.dim()) throw_dimension("knn_accuracy: feature dimension mismatch");
  std::size_t correct = 0;
  const std::size_t d = test.dim();
  for (std::size_t q = 0; q < test.size(); ++q)
    if (knn_classify(test.features.data() + q * d, d, train, k, tau, weighted) == test.labels[q])
      ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double linear_probe(const Tensor& train_feats, const std::vector<int>& train_labels,
                    const Tensor& test_feats, const std::vector<int>& test_labels,
                    const ProbeConfig& config) {
  if (train_feats.rank() != 2 || test_feats.rank() != 2)
    throw_dimension("linear_probe: features must be [M x D]");
  const std::size_t m = train_feats.shape()[0], d = train_feats.shape()[1];
  if (train_labels.size() != m || test_labels.size() != test_feats.shape()[0])
    throw_dimension("linear_probe: label count mismatch");
  int classes = 0;
  for (int l : train_labels) classes = std::max(classes, l + 1);
  for (int l : test_labels) classes = std::max(classes, l + 1);
  const std::size_t c = static_cast<std::size_t>(classes);

  // Zero init keeps the untrained probe exactly at chance.
  Tensor w = Tensor::zeros({d, c}, true);
  Tensor b = Tensor::zeros({c}, true);
  Rng rng = derive_rng(config.seed, Stream::eval);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = m - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.integer(i + 1));
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < m; start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, m);
      const std::size_t bs = end - start;
      Tensor batch = Tensor::zeros({bs, d});
      std::vector<std::size_t> targets(bs);
      for (std::size_t r = 0; r < bs; ++r) {
        for (std::size_t j = 0; j < d; ++j)
          batch[r * d + j] = train_feats[order[start + r] * d + j];
        targets[r] = static_cast<std::size_t>(train_labels[order[start + r]]);
      }
      Tape tape;
      Tensor logits = add_rowvec(tape, matmul(tape, batch, w), b);
      Tensor probs = softmax_with_temperature(tape, logits, 1.0);
      Tensor picked = pick_per_row(tape, probs, targets);
      Tensor loss = scale(tape, mean(tape, log(tape, picked)), -1.0);
      w.zero_grad();
      b.zero_grad();
      tape.backward(loss);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= config.lr * w.grad()[j];
      for (std::size_t j = 0; j < b.size(); ++j) b[j] -= config.lr * b.grad()[j];
    }
  }

  const std::size_t mt = test_feats.shape()[0];
  std::size_t correct = 0;
  for (std::size_t q = 0; q < mt; ++q) {
    int best = 0;
    double best_score = -1e300;
    for (std::size_t cls = 0; cls < c; ++cls) {
      double score = b[cls];
      for (std::size_t j = 0; j < d; ++j) score += test_feats[q * d + j] * w[j * c + cls];
      if (score > best_score) {  // ties keep the smaller class id
        best_score = score;
        best = static_cast<int>(cls);
      }
    }
    if (best == test_labels[q]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mt);
}

std::map<std::size_t, double> recall_at_k(const EvalIndex& index,
                                          const std::vector<std::size_t>& ks) {
  validate_index(index);
  if (ks.empty()) throw_parameter("recall_at_k: no k values");
  const std::size_t m = index.size(), d = index.dim();
  std::size_t max_k = 0;
  for (std::size_t k : ks) {
    if (k == 0 || k >= m)
      throw_parameter("recall_at_k: k must be in [1, M), got k=" + std::to_string(k) +
                      " with M=" + std::to_string(m));
    max_k = std::max(max_k, k);
  }
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t k : ks) hits[k] = 0;
  for (std::size_t q = 0; q < m; ++q) {
    const std::vector<double> sims = similarities(index.features.data() + q * d, index);
    const std::vector<std::size_t> order = top_neighbours(sims, max_k, static_cast<long>(q));
    for (std::size_t k : ks) {
      bool hit = false;
      for (std::size_t i = 0; i < std::min(k, order.size()) && !hit; ++i)
        hit = index.labels[order[i]] == index.labels[q];
      if (hit) ++hits[k];
    }
  }
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) out[k] = static_cast<double>(hits[k]) / static_cast<double>(m);
  return out;
}

namespace {

// Jacobi eigensolver for a symmetric matrix; returns eigenvalues (descending)
// and matching eigenvectors as rows.
void symmetric_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigvals,
                     std::vector<double>& eigvecs) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p * n + q]) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * a[p * n + q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double cs = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * cs;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a[i * n + p], aiq = a[i * n + q];
          a[i * n + p] = cs * aip - sn * aiq;
          a[i * n + q] = sn * aip + cs * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a[p * n + i], aqi = a[q * n + i];
          a[p * n + i] = cs * api - sn * aqi;
          a[q * n + i] = sn * api + cs * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v[i * n + p], viq = v[i * n + q];
          v[i * n + p] = cs * vip - sn * viq;
          v[i * n + q] = sn * vip + cs * viq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });
  eigvals.resize(n);
  eigvecs.assign(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    eigvals[r] = a[order[r] * n + order[r]];
    for (std::size_t i = 0; i < n; ++i) eigvecs[r * n + i] = v[i * n + order[r]];
  }
}

}  // namespace

Tensor project_2d(const Tensor& features) {
  if (features.rank() != 2) throw_dimension("project_2d: features must be [M x D]");
  const std::size_t m = features.shape()[0], d = features.shape()[1];
  if (m < 2) throw_parameter("project_2d: need at least 2 samples");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features[i * d + j];
  for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(m);

  std::vector<double> centered(m * d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = features[i * d + j] - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = 0; q < d; ++q)
        cov[p * d + q] += centered[i * d + p] * centered[i * d + q];
  for (double& v : cov) v /= static_cast<double>(m - 1);

  std::vector<double> eigvals, eigvecs;
  symmetric_eigen(cov, d, eigvals, eigvecs);

  Tensor out = Tensor::zeros({m, 2});
  for (std::size_t comp = 0; comp < 2; ++comp) {
    std::vector<double> axis(d, 0.0);
    if (comp < d)
      for (std::size_t j = 0; j < d; ++j) axis[j] = eigvecs[comp * d + j];
    // Deterministic sign: largest-magnitude coordinate positive.
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(axis[j]) > std::abs(axis[arg])) arg = j;
    if (axis[arg] < 0.0)
      for (double& v : axis) v = -v;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += centered[i * d + j] * axis[j];
      out[i * 2 + comp] = dot;
    }
  }
  return out;
}

double intra_alignment_diagnostic(const EncoderSpec& spec, const EncoderParams& params,
                                  const EmbeddingBank& bank, const UnlabeledView& data,
                                  const AugmentPolicy& policy, double intra_tau,
                                  std::size_t max_samples, std::uint64_t seed) {
  if (data.size() == 0) throw_config("diagnostic: empty dataset");
  const std::size_t count = std::min(max_samples, data.size());
  EncoderParams frozen;
  for (const Tensor& t : params.weights) frozen.weights.push_back(t.detach());
  for (const Tensor& t : params.biases) frozen.biases.push_back(t.detach());

  // Deterministic instance subset.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pick_rng = derive_rng(seed, Stream::eval, {0});
  for (std::size_t i = data.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(pick_rng.integer(i + 1));
    std::swap(order[i], order[j]);
  }
  order.resize(count);

  const std::size_t elems = shape_size(data.sample_shape());
  Tensor batch1 = Tensor::zeros({count, elems});
  Tensor batch2 = Tensor::zeros({count, elems});
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor x = data.sample(order[i]);
    Rng r1 = derive_rng(seed, Stream::eval, {1, order[i], 0});
    Rng r2 = derive_rng(seed, Stream::eval, {1, order[i], 1});
    const Tensor v1 = augment_view(x, policy, r1, data.value_lo(), data.value_hi());
    const Tensor v2 = augment_view(x, policy, r2, data.value_lo(), data.value_hi());
    for (std::size_t j = 0; j < elems; ++j) {
      batch1[i * elems + j] = v1[j];
      batch2[i * elems + j] = v2[j];
    }
  }
  Tape tape;
  const Tensor v = encoder_forward(tape, spec, frozen, batch1);
  const Tensor vhat = encoder_forward(tape, spec, frozen, batch2);
  return intra_loss(tape, v, vhat, bank, intra_tau).item();
}

Tensor extract_features(const EncoderSpec& spec, const EncoderParams& params,
                        const Dataset& dataset, std::size_t batch_size) {
  if (dataset.count() == 0) throw_config("extract_features: empty dataset");
  EncoderParams frozen;
  for (const Tensor& t : params.weights) frozen.weights.push_back(t.detach());
  for (const Tensor& t : params.biases) frozen.biases.push_back(t.detach());
  const std::size_t m = dataset.count();
  const std::size_t elems = dataset.sample_elems();
  Tensor out = Tensor::zeros({m, spec.embed_dim});
  Tape tape;
  for (std::size_t start = 0; start < m; start += batch_size) {
    const std::size_t end = std::min(start + batch_size, m);
    Tensor batch = Tensor::zeros({end - start, elems});
    for (std::size_t i = start; i < end; ++i)
      for (std::size_t j = 0; j < elems; ++j)
        batch[(i - start) * elems + j] = static_cast<double>(dataset.store[i * elems + j]);
    const Tensor feats = encoder_forward(tape, spec, frozen, batch);
    for (std::size_t i = 0; i < feats.size(); ++i) out[start * spec.embed_dim + i] = feats[i];
  }
  return out;
}

EvalIndex build_index(const EncoderSpec& spec, const EncoderParams& params,
                      const Dataset& dataset) {
  EvalIndex index;
  index.features = extract_features(spec, params, dataset);
  index.labels = dataset.labels;
  index.split = dataset.split;
  return index;
}

}  // namespace eir

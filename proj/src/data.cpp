#include "eir/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "eir/error.hpp"
#include "eir/rng.hpp"

namespace eir {

Tensor Dataset::sample(std::size_t i) const {
  if (i >= count()) throw_index("dataset: sample index " + std::to_string(i) + " out of range");
  const std::size_t n = sample_elems();
  Tensor t = Tensor::zeros(sample_shape);
  for (std::size_t j = 0; j < n; ++j) t[j] = static_cast<double>(store[i * n + j]);
  return t;
}

int Dataset::num_classes() const {
  int mx = -1;
  for (int l : labels) mx = std::max(mx, l);
  return mx + 1;
}

namespace {
constexpr std::size_t kCifarRecord = 3073;
constexpr std::size_t kCifarPixels = 3072;
}  // namespace

Dataset parse_cifar10(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw_data("cifar10: cannot open " + file.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty()) throw_data("cifar10: " + file.string() + " is empty");
  if (bytes.size() % kCifarRecord != 0)
    throw_data("cifar10: " + file.string() + " truncated at byte offset " +
               std::to_string(bytes.size() - bytes.size() % kCifarRecord) + " (file size " +
               std::to_string(bytes.size()) + " is not a multiple of 3073)");
  const std::size_t count = bytes.size() / kCifarRecord;
  Dataset ds;
  ds.sample_shape = {3, 32, 32};
  ds.name = "cifar10";
  ds.store.resize(count * kCifarPixels);
  ds.labels.resize(count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char label = bytes[r * kCifarRecord];
    if (label > 9)
      throw_data("cifar10: corrupt label " + std::to_string(label) + " in record " +
                 std::to_string(r) + " at byte offset " + std::to_string(r * kCifarRecord));
    ds.labels[r] = label;
    const unsigned char* px = bytes.data() + r * kCifarRecord + 1;
    for (std::size_t j = 0; j < kCifarPixels; ++j)
      ds.store[r * kCifarPixels + j] = static_cast<double>(px[j]) / 255.0;
  }
  return ds;
}

Dataset load_cifar10_dir(const std::filesystem::path& dir, const std::string& split) {
  std::vector<std::filesystem::path> files;
  if (split == "train") {
    for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  } else if (split == "test") {
    files.push_back(dir / "test_batch.bin");
  } else {
    throw_parameter("cifar10: unknown split '" + split + "' (want train or test)");
  }
  Dataset all;
  for (const auto& f : files) {
    Dataset part = parse_cifar10(f);
    if (all.labels.empty()) {
      all = std::move(part);
    } else {
      all.store.insert(all.store.end(), part.store.begin(), part.store.end());
      all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
    }
  }
  all.split = split;
  return all;
}

void validate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw_parameter("synthetic: need at least 2 classes");
  if (spec.per_class == 0 || spec.test_per_class == 0)
    throw_parameter("synthetic: per-class counts must be positive");
  if (!(spec.separation > 0.0)) throw_parameter("synthetic: separation must be positive");
  if (spec.noise_std < 0.0) throw_parameter("synthetic: noise_std must be >= 0");
  if (spec.kind == SyntheticSpec::Kind::vector_data) {
    if (spec.dim == 0) throw_parameter("synthetic: dim must be positive");
  } else {
    if (spec.side == 0 || spec.channels == 0)
      throw_parameter("synthetic: side and channels must be positive");
  }
}

std::pair<Dataset, Dataset> generate_synthetic(const SyntheticSpec& spec) {
  validate_synthetic(spec);
  const bool image = spec.kind == SyntheticSpec::Kind::image_data;
  const Shape shape = image ? Shape{spec.channels, spec.side, spec.side} : Shape{spec.dim};
  const std::size_t elems = shape_size(shape);

  Rng rng = derive_rng(spec.seed, Stream::synthetic);
  std::vector<double> centers(spec.num_classes * elems);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    double ss = 0.0;
    for (std::size_t j = 0; j < elems; ++j) {
      const double v = rng.normal();
      centers[c * elems + j] = v;
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    for (std::size_t j = 0; j < elems; ++j) {
      double v = centers[c * elems + j] / norm * spec.separation;
      if (image) v = 0.5 + v;  // image clusters live around mid-gray
      centers[c * elems + j] = v;
    }
  }

  const double lo = image ? 0.0 : -(spec.separation + 6.0 * spec.noise_std + 1.0);
  const double hi = image ? 1.0 : spec.separation + 6.0 * spec.noise_std + 1.0;

  auto draw_split = [&](std::size_t per_class, const std::string& split) {
    Dataset ds;
    ds.sample_shape = shape;
    ds.name = "synthetic";
    ds.split = split;
    ds.value_lo = lo;
    ds.value_hi = hi;
    ds.store.reserve(spec.num_classes * per_class * elems);
    for (std::size_t c = 0; c < spec.num_classes; ++c)
      for (std::size_t s = 0; s < per_class; ++s) {
        for (std::size_t j = 0; j < elems; ++j) {
          const double v =
              std::clamp(centers[c * elems + j] + spec.noise_std * rng.normal(), lo, hi);
          ds.store.push_back(v);
        }
        ds.labels.push_back(static_cast<int>(c));
      }
    return ds;
  };

  Dataset train = draw_split(spec.per_class, "train");
  Dataset test = draw_split(spec.test_per_class, "test");
  return {std::move(train), std::move(test)};
}

namespace {

// Channel count: leading axis for rank-3 images, 1 otherwise.
std::size_t channel_count(const Dataset& ds) {
  return ds.sample_shape.size() == 3 ? ds.sample_shape[0] : 1;
}

}  // namespace

ChannelStats fit_normalization(const Dataset& ds) {
  const std::size_t ch = channel_count(ds);
  const std::size_t elems = ds.sample_elems();
  const std::size_t per_ch = elems / ch;
  ChannelStats stats;
  stats.mean.assign(ch, 0.0);
  stats.std_dev.assign(ch, 0.0);
  const std::size_t n = ds.count() * per_ch;
  for (std::size_t i = 0; i < ds.count(); ++i)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t j = 0; j < per_ch; ++j)
        stats.mean[c] += ds.store[i * elems + c * per_ch + j];
  for (std::size_t c = 0; c < ch; ++c) stats.mean[c] /= static_cast<double>(n);
  for (std::size_t i = 0; i < ds.count(); ++i)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t j = 0; j < per_ch; ++j) {
        const double d = ds.store[i * elems + c * per_ch + j] - stats.mean[c];
        stats.std_dev[c] += d * d;
      }
  for (std::size_t c = 0; c < ch; ++c)
    stats.std_dev[c] = std::sqrt(stats.std_dev[c] / static_cast<double>(n));
  return stats;
}

namespace {

Dataset apply_stats(const Dataset& ds, const ChannelStats& stats, bool forward) {
  const std::size_t ch = channel_count(ds);
  if (stats.mean.size() != ch || stats.std_dev.size() != ch)
    throw_parameter("normalize: stats channel count mismatch");
  for (std::size_t c = 0; c < ch; ++c) {
    if (!std::isfinite(stats.mean[c]) || !std::isfinite(stats.std_dev[c]))
      throw_parameter("normalize: non-finite stats");
    if (!(stats.std_dev[c] > 0.0)) throw_parameter("normalize: zero std in channel " +
                                                   std::to_string(c));
  }
  Dataset out = ds;
  const std::size_t elems = ds.sample_elems();
  const std::size_t per_ch = elems / ch;
  for (std::size_t i = 0; i < ds.count(); ++i)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t j = 0; j < per_ch; ++j) {
        double& v = out.store[i * elems + c * per_ch + j];
        v = forward ? (v - stats.mean[c]) / stats.std_dev[c]
                    : v * stats.std_dev[c] + stats.mean[c];
      }
  if (forward) {
    out.value_lo = -1e30;
    out.value_hi = 1e30;
  }
  return out;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw_data("raw dataset: truncated " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::ifstream& in, const std::string& what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw_data("raw dataset: truncated " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

Dataset normalize(const Dataset& ds, const ChannelStats& stats) {
  return apply_stats(ds, stats, true);
}

Dataset denormalize(const Dataset& ds, const ChannelStats& stats) {
  return apply_stats(ds, stats, false);
}

void save_raw(const Dataset& ds, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw_data("raw dataset: cannot write " + file.string());
  out.write("EIRD", 4);
  write_u32(out, static_cast<std::uint32_t>(ds.count()));
  write_u32(out, static_cast<std::uint32_t>(ds.sample_shape.size()));
  for (std::size_t d : ds.sample_shape) write_u64(out, d);
  for (double v : ds.store)
    write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  for (int l : ds.labels) write_u32(out, static_cast<std::uint32_t>(l));
  if (!out) throw_data("raw dataset: write failed for " + file.string());
}

Dataset load_raw(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw_data("raw dataset: cannot open " + file.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "EIRD", 4) != 0)
    throw_data("raw dataset: bad magic in " + file.string());
  const std::uint32_t count = read_u32(in, "count");
  const std::uint32_t rank = read_u32(in, "rank");
  Dataset ds;
  ds.name = file.stem().string();
  for (std::uint32_t i = 0; i < rank; ++i)
    ds.sample_shape.push_back(static_cast<std::size_t>(read_u64(in, "dims")));
  const std::size_t elems = ds.sample_elems();
  ds.store.resize(static_cast<std::size_t>(count) * elems);
  for (std::size_t i = 0; i < ds.store.size(); ++i)
    ds.store[i] = static_cast<double>(std::bit_cast<float>(read_u32(in, "samples")));
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i)
    ds.labels[i] = static_cast<int>(read_u32(in, "labels"));
  double lo = 0.0, hi = 1.0;
  if (!ds.store.empty()) {
    lo = *std::min_element(ds.store.begin(), ds.store.end());
    hi = *std::max_element(ds.store.begin(), ds.store.end());
  }
  ds.value_lo = lo;
  ds.value_hi = hi;
  return ds;
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t d : ds.sample_shape) {
    std::uint64_t v = d;
    mix(reinterpret_cast<const unsigned char*>(&v), 8);
  }
  for (double v : ds.store) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    mix(reinterpret_cast<const unsigned char*>(&bits), 8);
  }
  for (int l : ds.labels) {
    const std::uint32_t bits = static_cast<std::uint32_t>(l);
    mix(reinterpret_cast<const unsigned char*>(&bits), 4);
  }
  return h;
}

}  // namespace eir

#include "eir/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "eir/error.hpp"

namespace eir {

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& path, const std::string& key) {
  throw_config("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key())) bad_key(path, it.key());
}

template <typename T>
void get_to(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      obj.at(key).get_to(out);
    } catch (const json::exception& e) {
      throw_config("config: bad value for '" + std::string(key) + "': " + e.what());
    }
  }
}

EncoderSpec parse_encoder(const json& obj, std::size_t embed_dim) {
  check_keys(obj, "encoder", {"architecture", "layer_widths", "input_shape"});
  EncoderSpec spec;
  spec.embed_dim = embed_dim;
  std::string arch = "mlp";
  get_to(obj, "architecture", arch);
  if (arch == "mlp")
    spec.architecture = Architecture::mlp;
  else if (arch == "small_cnn")
    spec.architecture = Architecture::small_cnn;
  else
    throw_config("config: encoder.architecture must be 'mlp' or 'small_cnn', got '" + arch + "'");
  get_to(obj, "layer_widths", spec.layer_widths);
  get_to(obj, "input_shape", spec.input_shape);
  return spec;
}

json encoder_to_json(const EncoderSpec& spec) {
  json obj;
  obj["architecture"] = spec.architecture == Architecture::mlp ? "mlp" : "small_cnn";
  obj["layer_widths"] = spec.layer_widths;
  obj["input_shape"] = spec.input_shape;
  return obj;
}

InterpolationSpec parse_interpolation(const json& obj) {
  check_keys(obj, "interpolation", {"mode", "ratio_policy", "r", "lo", "hi"});
  InterpolationSpec spec;
  std::string mode = "mixup", policy = "uniform";
  get_to(obj, "mode", mode);
  get_to(obj, "ratio_policy", policy);
  if (mode == "mixup")
    spec.mode = InterpolationSpec::Mode::mixup;
  else if (mode == "cutmix")
    spec.mode = InterpolationSpec::Mode::cutmix;
  else
    throw_config("config: interpolation.mode must be 'mixup' or 'cutmix', got '" + mode + "'");
  if (policy == "fixed")
    spec.ratio_policy = InterpolationSpec::RatioPolicy::fixed;
  else if (policy == "uniform")
    spec.ratio_policy = InterpolationSpec::RatioPolicy::uniform;
  else
    throw_config("config: interpolation.ratio_policy must be 'fixed' or 'uniform'");
  get_to(obj, "r", spec.r);
  get_to(obj, "lo", spec.lo);
  get_to(obj, "hi", spec.hi);
  return spec;
}

json interpolation_to_json(const InterpolationSpec& spec) {
  json obj;
  obj["mode"] = spec.mode == InterpolationSpec::Mode::mixup ? "mixup" : "cutmix";
  obj["ratio_policy"] =
      spec.ratio_policy == InterpolationSpec::RatioPolicy::fixed ? "fixed" : "uniform";
  obj["r"] = spec.r;
  obj["lo"] = spec.lo;
  obj["hi"] = spec.hi;
  return obj;
}

AugmentPolicy parse_augment(const json& obj) {
  check_keys(obj, "augment",
             {"crop_scale", "flip_prob", "jitter_strength", "grayscale_prob", "crop", "flip",
              "jitter", "grayscale"});
  AugmentPolicy policy;
  get_to(obj, "crop_scale", policy.crop_scale);
  get_to(obj, "flip_prob", policy.flip_prob);
  get_to(obj, "jitter_strength", policy.jitter_strength);
  get_to(obj, "grayscale_prob", policy.grayscale_prob);
  get_to(obj, "crop", policy.crop);
  get_to(obj, "flip", policy.flip);
  get_to(obj, "jitter", policy.jitter);
  get_to(obj, "grayscale", policy.grayscale);
  return policy;
}

json augment_to_json(const AugmentPolicy& policy) {
  json obj;
  obj["crop_scale"] = policy.crop_scale;
  obj["flip_prob"] = policy.flip_prob;
  obj["jitter_strength"] = policy.jitter_strength;
  obj["grayscale_prob"] = policy.grayscale_prob;
  obj["crop"] = policy.crop;
  obj["flip"] = policy.flip;
  obj["jitter"] = policy.jitter;
  obj["grayscale"] = policy.grayscale;
  return obj;
}

DatasetConfig parse_dataset(const json& obj) {
  check_keys(obj, "dataset",
             {"type", "kind", "num_classes", "per_class", "test_per_class", "dim", "side",
              "channels", "separation", "noise_std", "seed", "path", "test_path", "normalize"});
  DatasetConfig config;
  std::string type = "synthetic";
  get_to(obj, "type", type);
  if (type == "synthetic")
    config.type = DatasetConfig::Type::synthetic;
  else if (type == "cifar10")
    config.type = DatasetConfig::Type::cifar10;
  else if (type == "raw")
    config.type = DatasetConfig::Type::raw;
  else
    throw_config("config: dataset.type must be synthetic, cifar10 or raw, got '" + type + "'");
  std::string kind = "vector";
  get_to(obj, "kind", kind);
  if (kind == "vector")
    config.synthetic.kind = SyntheticSpec::Kind::vector_data;
  else if (kind == "image")
    config.synthetic.kind = SyntheticSpec::Kind::image_data;
  else
    throw_config("config: dataset.kind must be 'vector' or 'image', got '" + kind + "'");
  get_to(obj, "num_classes", config.synthetic.num_classes);
  get_to(obj, "per_class", config.synthetic.per_class);
  get_to(obj, "test_per_class", config.synthetic.test_per_class);
  get_to(obj, "dim", config.synthetic.dim);
  get_to(obj, "side", config.synthetic.side);
  get_to(obj, "channels", config.synthetic.channels);
  get_to(obj, "separation", config.synthetic.separation);
  get_to(obj, "noise_std", config.synthetic.noise_std);
  get_to(obj, "seed", config.synthetic.seed);
  get_to(obj, "path", config.path);
  get_to(obj, "test_path", config.test_path);
  get_to(obj, "normalize", config.normalize);
  return config;
}

json dataset_to_json(const DatasetConfig& config) {
  json obj;
  switch (config.type) {
    case DatasetConfig::Type::synthetic:
      obj["type"] = "synthetic";
      break;
    case DatasetConfig::Type::cifar10:
      obj["type"] = "cifar10";
      break;
    case DatasetConfig::Type::raw:
      obj["type"] = "raw";
      break;
  }
  obj["kind"] =
      config.synthetic.kind == SyntheticSpec::Kind::vector_data ? "vector" : "image";
  obj["num_classes"] = config.synthetic.num_classes;
  obj["per_class"] = config.synthetic.per_class;
  obj["test_per_class"] = config.synthetic.test_per_class;
  obj["dim"] = config.synthetic.dim;
  obj["side"] = config.synthetic.side;
  obj["channels"] = config.synthetic.channels;
  obj["separation"] = config.synthetic.separation;
  obj["noise_std"] = config.synthetic.noise_std;
  obj["seed"] = config.synthetic.seed;
  obj["path"] = config.path;
  obj["test_path"] = config.test_path;
  obj["normalize"] = config.normalize;
  return obj;
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw_config("config: top level must be a JSON object");
  check_keys(doc, "",
             {"epochs", "batch_size", "lr", "lr_milestones", "lr_decay", "sgd_momentum",
              "weight_decay", "tau", "intra_tau", "bank_momentum", "lambda1", "lambda2",
              "embed_dim", "seed", "rounds", "avg_views", "inter_literal", "inter_stop_gradient",
              "checkpoint_every", "eval_every", "eval_k", "encoder", "interpolation", "augment",
              "dataset"});
  RunConfig config;
  TrainConfig& t = config.train;
  get_to(doc, "epochs", t.epochs);
  get_to(doc, "batch_size", t.batch_size);
  get_to(doc, "lr", t.lr);
  get_to(doc, "lr_milestones", t.lr_milestones);
  get_to(doc, "lr_decay", t.lr_decay);
  get_to(doc, "sgd_momentum", t.sgd_momentum);
  get_to(doc, "weight_decay", t.weight_decay);
  get_to(doc, "tau", t.tau);
  if (doc.contains("intra_tau") && !doc.at("intra_tau").is_null()) {
    double v = 0;
    doc.at("intra_tau").get_to(v);
    t.intra_tau = v;
  }
  get_to(doc, "bank_momentum", t.bank_momentum);
  get_to(doc, "lambda1", t.lambda1);
  get_to(doc, "lambda2", t.lambda2);
  get_to(doc, "embed_dim", t.embed_dim);
  get_to(doc, "seed", t.seed);
  get_to(doc, "rounds", t.rounds);
  get_to(doc, "avg_views", t.avg_views);
  get_to(doc, "inter_literal", t.inter_literal);
  get_to(doc, "inter_stop_gradient", t.inter_stop_gradient);
  get_to(doc, "checkpoint_every", t.checkpoint_every);
  get_to(doc, "eval_every", t.eval_every);
  get_to(doc, "eval_k", t.eval_k);
  if (doc.contains("encoder")) t.encoder = parse_encoder(doc.at("encoder"), t.embed_dim);
  t.encoder.embed_dim = t.embed_dim;
  if (doc.contains("interpolation")) t.interpolation = parse_interpolation(doc.at("interpolation"));
  if (doc.contains("augment")) t.augment = parse_augment(doc.at("augment"));
  if (doc.contains("dataset")) config.dataset = parse_dataset(doc.at("dataset"));
  validate_train_config(t);
  if (config.dataset.type == DatasetConfig::Type::synthetic)
    validate_synthetic(config.dataset.synthetic);
  return config;
}

json run_config_to_json(const RunConfig& config) {
  const TrainConfig& t = config.train;
  json doc;
  doc["epochs"] = t.epochs;
  doc["batch_size"] = t.batch_size;
  doc["lr"] = t.lr;
  doc["lr_milestones"] = t.lr_milestones;
  doc["lr_decay"] = t.lr_decay;
  doc["sgd_momentum"] = t.sgd_momentum;
  doc["weight_decay"] = t.weight_decay;
  doc["tau"] = t.tau;
  if (t.intra_tau)
    doc["intra_tau"] = *t.intra_tau;
  else
    doc["intra_tau"] = nullptr;
  doc["bank_momentum"] = t.bank_momentum;
  doc["lambda1"] = t.lambda1;
  doc["lambda2"] = t.lambda2;
  doc["embed_dim"] = t.embed_dim;
  doc["seed"] = t.seed;
  doc["rounds"] = t.rounds;
  doc["avg_views"] = t.avg_views;
  doc["inter_literal"] = t.inter_literal;
  doc["inter_stop_gradient"] = t.inter_stop_gradient;
  doc["checkpoint_every"] = t.checkpoint_every;
  doc["eval_every"] = t.eval_every;
  doc["eval_k"] = t.eval_k;
  doc["encoder"] = encoder_to_json(t.encoder);
  doc["interpolation"] = interpolation_to_json(t.interpolation);
  doc["augment"] = augment_to_json(t.augment);
  doc["dataset"] = dataset_to_json(config.dataset);
  return doc;
}

std::string canonical_config_json(const RunConfig& config) {
  return run_config_to_json(config).dump(2);
}

void apply_override(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw_config("config: override must look like key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings are taken verbatim
  }
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw_config("config: empty key segment in override '" + assignment + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

RunConfig run_config_from_text(const std::string& text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw_config(std::string("config: invalid JSON: ") + e.what());
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  return parse_run_config(doc);
}

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(file);
  if (!in) throw_config("config: cannot open " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return run_config_from_text(text, overrides);
}

namespace {

std::filesystem::path resolve_data_path(const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_absolute() || std::filesystem::exists(path)) return path;
  if (const char* root = std::getenv("EIR_DATA_DIR")) {
    const std::filesystem::path joined = std::filesystem::path(root) / path;
    if (std::filesystem::exists(joined)) return joined;
  }
  return path;
}

}  // namespace

std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& config) {
  std::pair<Dataset, Dataset> out;
  switch (config.type) {
    case DatasetConfig::Type::synthetic:
      out = generate_synthetic(config.synthetic);
      break;
    case DatasetConfig::Type::cifar10: {
      if (config.path.empty()) throw_config("config: dataset.path is required for cifar10");
      const auto dir = resolve_data_path(config.path);
      if (!std::filesystem::exists(dir))
        throw_data("dataset: cifar10 directory not found: " + dir.string());
      out = {load_cifar10_dir(dir, "train"), load_cifar10_dir(dir, "test")};
      break;
    }
    case DatasetConfig::Type::raw: {
      if (config.path.empty()) throw_config("config: dataset.path is required for raw datasets");
      const auto train_path = resolve_data_path(config.path);
      if (!std::filesystem::exists(train_path))
        throw_data("dataset: raw file not found: " + train_path.string());
      Dataset train = load_raw(train_path);
      train.split = "train";
      Dataset test;
      if (!config.test_path.empty()) {
        const auto test_path = resolve_data_path(config.test_path);
        if (!std::filesystem::exists(test_path))
          throw_data("dataset: raw file not found: " + test_path.string());
        test = load_raw(test_path);
        test.split = "test";
      }
      out = {std::move(train), std::move(test)};
      break;
    }
  }
  if (config.normalize) {
    const ChannelStats stats = fit_normalization(out.first);
    out.first = normalize(out.first, stats);
    if (out.second.count() > 0) out.second = normalize(out.second, stats);
  }
  return out;
}

}  // namespace eir

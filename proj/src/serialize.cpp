#include "eir/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "eir/config.hpp"
#include "eir/error.hpp"

namespace eir {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& what) : bytes_(bytes), what_(what) {}

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return std::bit_cast<float>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ >= bytes_.size(); }

 private:
  unsigned char byte() { return static_cast<unsigned char>(bytes_[pos_++]); }
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw_data("checkpoint: truncated " + what_ + " at byte offset " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string encode_arrays(const std::vector<Tensor>& tensors) {
  std::string out;
  put_u64(out, tensors.size());
  for (const Tensor& t : tensors) {
    put_u64(out, t.rank());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, static_cast<float>(t[i]));
  }
  return out;
}

std::vector<Tensor> decode_arrays(const std::string& bytes, bool requires_grad) {
  Reader r(bytes, "array section");
  const std::uint64_t count = r.u64();
  std::vector<Tensor> tensors;
  for (std::uint64_t a = 0; a < count; ++a) {
    const std::uint64_t rank = r.u64();
    Shape shape;
    for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.u64()));
    Tensor t = Tensor::zeros(shape, requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.f32());
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void append_section(std::string& out, const std::string& tag, const std::string& payload) {
  put_u16(out, static_cast<std::uint16_t>(tag.size()));
  out += tag;
  put_u64(out, payload.size());
  out += payload;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const std::string& config_json,
                     const TrainConfig& config, const TrainState& state) {
  std::string body;
  append_section(body, "config", config_json);

  nlohmann::json spec_json;
  spec_json["architecture"] =
      config.encoder.architecture == Architecture::mlp ? "mlp" : "small_cnn";
  spec_json["layer_widths"] = config.encoder.layer_widths;
  spec_json["embed_dim"] = config.encoder.embed_dim;
  spec_json["input_shape"] = config.encoder.input_shape;
  append_section(body, "encoder_spec", spec_json.dump());

  append_section(body, "params", encode_arrays(state.params.all()));
  append_section(body, "velocity", encode_arrays(state.velocity));
  append_section(body, "bank", encode_arrays({state.bank.rows()}));

  std::string progress;
  put_u64(progress, state.epochs_done);
  put_u64(progress, config.seed);
  put_u64(progress, std::bit_cast<std::uint64_t>(config.bank_momentum));
  append_section(body, "progress", progress);

  std::ofstream out(file, std::ios::binary);
  if (!out) throw_data("checkpoint: cannot write " + file.string());
  out.write("EIRC", 4);
  std::string version;
  put_u16(version, kCheckpointVersion);
  out.write(version.data(), static_cast<std::streamsize>(version.size()));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw_data("checkpoint: write failed for " + file.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw_data("checkpoint: cannot open " + file.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 6 || std::memcmp(bytes.data(), "EIRC", 4) != 0)
    throw_config("checkpoint: bad magic in " + file.string());
  Reader r(bytes, file.string());
  r.str(4);  // magic
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw_config("checkpoint: unsupported version " + std::to_string(version) + " in " +
                 file.string());

  std::map<std::string, std::string> sections;
  while (!r.done()) {
    const std::uint16_t tag_len = r.u16();
    const std::string tag = r.str(tag_len);
    const std::uint64_t payload_len = r.u64();
    sections[tag] = r.str(static_cast<std::size_t>(payload_len));
  }
  for (const char* required : {"config", "encoder_spec", "params", "velocity", "bank", "progress"})
    if (!sections.count(required))
      throw_config("checkpoint: missing section '" + std::string(required) + "' in " +
                   file.string());

  Checkpoint ckpt{std::string(), EncoderSpec{}, TrainState{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0}, 0};
  ckpt.config_json = sections["config"];

  const RunConfig run = run_config_from_text(ckpt.config_json);
  ckpt.spec = run.train.encoder;

  std::vector<Tensor> flat = decode_arrays(sections["params"], true);
  if (flat.size() % 2 != 0) throw_config("checkpoint: malformed params section");
  for (std::size_t i = 0; i < flat.size(); i += 2) {
    ckpt.state.params.weights.push_back(flat[i]);
    ckpt.state.params.biases.push_back(flat[i + 1]);
  }
  ckpt.state.velocity = decode_arrays(sections["velocity"], false);

  std::vector<Tensor> bank_rows = decode_arrays(sections["bank"], false);
  if (bank_rows.size() != 1 || bank_rows[0].rank() != 2)
    throw_config("checkpoint: malformed bank section");

  Reader progress(sections["progress"], "progress section");
  ckpt.state.epochs_done = static_cast<std::size_t>(progress.u64());
  ckpt.seed = progress.u64();
  const double bank_momentum = std::bit_cast<double>(progress.u64());
  ckpt.state.bank = EmbeddingBank(bank_rows[0], bank_momentum);

  if (ckpt.state.bank.dim() != ckpt.spec.embed_dim)
    throw_config("checkpoint: bank dimension " + std::to_string(ckpt.state.bank.dim()) +
                 " does not match encoder embed_dim " + std::to_string(ckpt.spec.embed_dim));
  return ckpt;
}

std::string file_hash_hex(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw_data("hash: cannot open " + file.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace eir

#include "byteprobe/cnn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "byteprobe/errors.hpp"

namespace byteprobe {

namespace {
using nlohmann::json;
}

ModelConfig ModelConfig::desk_default() {
  ModelConfig c;
  c.input_len = 4096;
  c.layers = {{96, 11, 4, 4}, {96, 11, 4, 4}, {128, 11, 4, 4}, {128, 11, 4, 4}, {192, 11, 4, 4}};
  return c;
}

ModelConfig ModelConfig::paper_default() {
  ModelConfig c = desk_default();
  c.input_len = 102400;
  return c;
}

std::vector<double> ModelConfig::standard_dropout_rates() {
  return {0.1, 0.25, 0.25, 0.25, 0.5, 0.5};
}

void ModelConfig::validate() const {
  if (input_len == 0) throw ConfigError("config: input_len must be positive");
  if (vocab < 2) throw ConfigError("config: vocab must be >= 2");
  if (embed_dim == 0) throw ConfigError("config: embed_dim must be positive");
  if (layers.size() != 5) {
    throw ConfigError("config: expected 5 conv/pool blocks, got " +
                      std::to_string(layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerConfig& l = layers[i];
    if (l.filters == 0 || l.kernel_width == 0 || l.pool_width == 0 || l.pool_stride == 0) {
      throw ConfigError("config: block " + std::to_string(i + 1) + " has a zero field");
    }
  }
  if (dropout_rates) {
    if (dropout_rates->size() != 6) {
      throw ConfigError("config: expected 6 dropout rates (embedding + 5 blocks), got " +
                        std::to_string(dropout_rates->size()));
    }
    for (double r : *dropout_rates) {
      if (r < 0.0 || r >= 1.0) throw ConfigError("config: dropout rate outside [0,1)");
    }
  }
  stage_lengths();  // throws if any conv runs out of positions
}

std::vector<std::size_t> ModelConfig::stage_lengths() const {
  std::vector<std::size_t> lengths{input_len};
  std::size_t len = input_len;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerConfig& l = layers[i];
    if (len < l.kernel_width) {
      throw ConfigError("config: block " + std::to_string(i + 1) + " kernel width " +
                        std::to_string(l.kernel_width) + " exceeds sequence length " +
                        std::to_string(len));
    }
    len = len - l.kernel_width + 1;
    lengths.push_back(len);
    const std::size_t pw = std::min(l.pool_width, len);
    len = (len - pw) / l.pool_stride + 1;
    lengths.push_back(len);
  }
  return lengths;
}

std::vector<int> preprocess(const std::vector<std::uint8_t>& bytes, std::size_t input_len) {
  if (bytes.empty()) throw InputError("preprocess: empty input");
  std::vector<int> symbols(input_len, kPaddingSymbol);
  const std::size_t n = std::min(bytes.size(), input_len);
  for (std::size_t i = 0; i < n; ++i) symbols[i] = bytes[i];
  return symbols;
}

namespace {

Tensor xavier_tensor(std::vector<std::size_t> shape, std::size_t fan_in,
                     std::size_t fan_out, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

CnnModel build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  CnnModel m;
  m.config = config;
  // The embedding is a lookup: each output coordinate reads exactly one row,
  // so its Xavier fan_in is 1 (the one-hot convention of fan_in = vocab
  // shrinks the whole activation tower ~5x and stalls desk-scale training).
  m.embedding = {"embedding",
                 xavier_tensor({config.vocab, config.embed_dim}, 1, config.embed_dim, rng)};
  std::size_t channels = config.embed_dim;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const LayerConfig& l = config.layers[i];
    const std::string tag = "conv" + std::to_string(i + 1);
    m.conv_kernels.push_back(
        {tag + ".kernels", xavier_tensor({l.filters, channels, l.kernel_width},
                                         channels * l.kernel_width,
                                         l.filters * l.kernel_width, rng)});
    m.conv_biases.push_back({tag + ".bias", Tensor::zeros({l.filters}, true)});
    channels = l.filters;
  }
  m.dense_weights = {"dense.weights", xavier_tensor({1, channels}, channels, 1, rng)};
  m.dense_bias = {"dense.bias", Tensor::zeros({1}, true)};
  return m;
}

std::vector<Parameter*> CnnModel::parameters() {
  std::vector<Parameter*> out{&embedding};
  for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
    out.push_back(&conv_kernels[i]);
    out.push_back(&conv_biases[i]);
  }
  out.push_back(&dense_weights);
  out.push_back(&dense_bias);
  return out;
}

std::vector<const Parameter*> CnnModel::parameters() const {
  std::vector<const Parameter*> out{&embedding};
  for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
    out.push_back(&conv_kernels[i]);
    out.push_back(&conv_biases[i]);
  }
  out.push_back(&dense_weights);
  out.push_back(&dense_bias);
  return out;
}

void CnnModel::set_trainable(bool trainable) {
  for (Parameter* p : parameters()) p->tensor.set_requires_grad(trainable);
}

Tensor embed(const CnnModel& model, const std::vector<int>& symbols) {
  if (symbols.size() != model.config.input_len) {
    throw InputError("forward: got " + std::to_string(symbols.size()) +
                     " symbols, model expects " + std::to_string(model.config.input_len));
  }
  return embedding_lookup(symbols, model.embedding.tensor);
}

Tensor forward_logit(const CnnModel& model, const Tensor& embedded, bool training,
                     Rng* dropout_rng) {
  const ModelConfig& cfg = model.config;
  if (embedded.rank() != 2 || embedded.dim(0) != cfg.embed_dim ||
      embedded.dim(1) != cfg.input_len) {
    throw InputError("forward: embedded input has shape mismatch with model config");
  }
  const bool use_dropout = training && cfg.dropout_rates.has_value();
  Rng fallback(0);
  Rng& rng = dropout_rng ? *dropout_rng : fallback;

  Tensor x = embedded;
  if (use_dropout) x = dropout(x, (*cfg.dropout_rates)[0], true, rng);
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerConfig& l = cfg.layers[i];
    x = relu(conv1d(x, model.conv_kernels[i].tensor, model.conv_biases[i].tensor, 1));
    const std::size_t pw = std::min(l.pool_width, x.dim(1));
    x = maxpool1d(x, pw, l.pool_stride).output;
    if (use_dropout) x = dropout(x, (*cfg.dropout_rates)[i + 1], true, rng);
  }
  // Global temporal max keeps the dense head independent of input length.
  x = maxpool1d(x, x.dim(1), x.dim(1)).output;
  x = reshape(x, {x.dim(0)});
  return dense(x, model.dense_weights.tensor, model.dense_bias.tensor);
}

Tensor forward_from_embedded(const CnnModel& model, const Tensor& embedded,
                             bool training, Rng* dropout_rng) {
  return sigmoid(forward_logit(model, embedded, training, dropout_rng));
}

double predict(const CnnModel& model, const std::vector<int>& symbols) {
  return forward_from_embedded(model, embed(model, symbols), false).item();
}

Tensor layer1_activations(const CnnModel& model, const std::vector<int>& symbols) {
  Tensor x = embed(model, symbols);
  return relu(conv1d(x, model.conv_kernels[0].tensor, model.conv_biases[0].tensor, 1));
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("model file: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                  buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
};

constexpr char kMagic[4] = {'B', 'S', 'C', 'N'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const ModelConfig& c) {
  json j;
  j["input_len"] = c.input_len;
  j["vocab"] = c.vocab;
  j["embed_dim"] = c.embed_dim;
  json layers = json::array();
  for (const LayerConfig& l : c.layers) {
    layers.push_back({l.filters, l.kernel_width, l.pool_width, l.pool_stride});
  }
  j["layers"] = layers;
  if (c.dropout_rates) {
    j["dropout_rates"] = *c.dropout_rates;
  } else {
    j["dropout_rates"] = nullptr;
  }
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.input_len = j.at("input_len").get<std::size_t>();
    c.vocab = j.at("vocab").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.layers.clear();
    for (const auto& l : j.at("layers")) {
      c.layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>(),
                          l.at(2).get<std::size_t>(), l.at(3).get<std::size_t>()});
    }
    if (!j.at("dropout_rates").is_null()) {
      c.dropout_rates = j.at("dropout_rates").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: bad config block: ") + e.what());
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const CnnModel& model) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  const std::string cfg = config_to_json(model.config).dump();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.insert(out.end(), p->name.begin(), p->name.end());
    put_u32(out, static_cast<std::uint32_t>(p->tensor.rank()));
    for (std::size_t d : p->tensor.shape()) put_u64(out, d);
    for (double v : p->tensor.data()) put_f64(out, v);
  }
  return out;
}

CnnModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r{bytes};
  if (r.str(4) != std::string(kMagic, 4)) throw FormatError("model file: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("model file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t cfg_len = r.u32();
  json cfg_json;
  try {
    cfg_json = json::parse(r.str(cfg_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: config is not valid JSON: ") + e.what());
  }
  const ModelConfig cfg = config_from_json(cfg_json);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }

  CnnModel model = build_model(cfg, 0);
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : model.parameters()) by_name[p->name] = p;

  const std::uint32_t count = r.u32();
  if (count != by_name.size()) {
    throw FormatError("model file: expected " + std::to_string(by_name.size()) +
                      " parameters, header says " + std::to_string(count));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("model file: unknown parameter \"" + name + "\"");
    }
    Parameter* p = it->second;
    const std::uint32_t ndim = r.u32();
    std::vector<std::size_t> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<std::size_t>(r.u64()));
    if (shape != p->tensor.shape()) {
      throw FormatError("model file: parameter \"" + name + "\" has unexpected shape");
    }
    for (double& v : p->tensor.data()) v = r.f64();
    by_name.erase(it);
  }
  if (!by_name.empty()) {
    throw FormatError("model file: missing parameter \"" + by_name.begin()->first + "\"");
  }
  if (r.pos != bytes.size()) throw FormatError("model file: trailing bytes");
  return model;
}

void save_model(const CnnModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("save_model: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("save_model: write failed for " + path);
}

CnnModel load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("load_model: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace byteprobe

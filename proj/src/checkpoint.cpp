#include "adapterlab/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "adapterlab/errors.hpp"

namespace adapterlab {

namespace {

constexpr std::string_view kMagic = "adapterlab-checkpoint";
constexpr std::string_view kMomentPrefix = "optimizer.m/";
constexpr std::string_view kSecondMomentPrefix = "optimizer.v/";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string shape_field(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& field) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw LoadError("checkpoint field '" + field + "' has malformed value '" + text + "'");
  }
  return v;
}

Shape parse_shape(const std::string& text, const std::string& tensor) {
  Shape s;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    s.push_back(parse_number<std::size_t>(text.substr(start, comma - start), "shape of " + tensor));
    start = comma + 1;
  }
  for (std::size_t e : s) {
    if (e == 0) throw LoadError("checkpoint field 'shape of " + tensor + "' has a zero extent");
  }
  return s;
}

std::vector<unsigned char> encode(std::span<const double> values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return bytes;
}

std::vector<double> decode(std::span<const unsigned char> bytes) {
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

const std::string& required_field(const CheckpointContents& c, const std::string& key) {
  auto it = c.fields.find(key);
  if (it == c.fields.end()) throw LoadError("checkpoint is missing field '" + key + "'");
  return it->second;
}

void put_config(CheckpointContents& c, const ModelConfig& m) {
  c.fields["config.layers"] = std::to_string(m.layers);
  c.fields["config.width"] = std::to_string(m.width);
  c.fields["config.heads"] = std::to_string(m.heads);
  c.fields["config.ffn_width"] = std::to_string(m.ffn_width);
  c.fields["config.vocab"] = std::to_string(m.vocab);
  c.fields["config.max_len"] = std::to_string(m.max_len);
  c.fields["config.layer_norm_eps"] = format_double(m.layer_norm_eps);
}

ModelConfig get_config(const CheckpointContents& c) {
  ModelConfig m;
  auto size = [&](const char* key) { return parse_number<std::size_t>(required_field(c, key), key); };
  m.layers = size("config.layers");
  m.width = size("config.width");
  m.heads = size("config.heads");
  m.ffn_width = size("config.ffn_width");
  m.vocab = size("config.vocab");
  m.max_len = size("config.max_len");
  m.layer_norm_eps = parse_number<double>(required_field(c, "config.layer_norm_eps"), "config.layer_norm_eps");
  return m;
}

void check_config_matches(const ModelConfig& stored, const ModelConfig& expected) {
  auto cmp = [](const char* field, auto a, auto b) {
    if (a != b) {
      std::ostringstream os;
      os << "checkpoint field '" << field << "' is " << a << " but " << b << " was expected";
      throw LoadError(os.str());
    }
  };
  cmp("config.layers", stored.layers, expected.layers);
  cmp("config.width", stored.width, expected.width);
  cmp("config.heads", stored.heads, expected.heads);
  cmp("config.ffn_width", stored.ffn_width, expected.ffn_width);
  cmp("config.vocab", stored.vocab, expected.vocab);
  cmp("config.max_len", stored.max_len, expected.max_len);
  cmp("config.layer_norm_eps", stored.layer_norm_eps, expected.layer_norm_eps);
}

void check_shapes(const ParameterMap& tensors, const ShapeMap& expected, bool require_all) {
  for (const auto& [name, t] : tensors) {
    auto it = expected.find(name);
    if (it == expected.end()) throw LoadError("checkpoint tensor '" + name + "' is not part of the declared model");
    if (t.shape() != it->second) {
      throw LoadError("shape mismatch for tensor '" + name + "': stored " + shape_to_string(t.shape()) +
                      ", config implies " + shape_to_string(it->second));
    }
  }
  if (require_all) {
    for (const auto& [name, shape] : expected) {
      if (!tensors.contains(name)) throw LoadError("checkpoint is missing tensor '" + name + "'");
    }
  }
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_checkpoint(const CheckpointContents& contents, const std::filesystem::path& path) {
  std::ostringstream manifest;
  manifest << kMagic << '\n' << "version " << kCheckpointVersion << '\n' << "kind " << contents.kind << '\n';
  for (const auto& [key, value] : contents.fields) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw InputError("checkpoint field '" + key + "' cannot be stored in the manifest");
    }
    manifest << "field " << key << ' ' << value << '\n';
  }
  std::vector<std::vector<unsigned char>> blobs;
  std::size_t offset = 0;
  for (const auto& [name, t] : contents.tensors) {
    blobs.push_back(encode(t.values()));
    const auto& blob = blobs.back();
    char sum[17];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(blob)));
    manifest << "tensor " << name << ' ' << shape_field(t.shape()) << ' ' << offset << ' ' << blob.size() << ' '
             << sum << '\n';
    offset += blob.size();
  }
  manifest << "end\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  const std::string text = manifest.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& blob : blobs) out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw LoadError("checkpoint field 'magic' is missing or wrong");
  if (!std::getline(in, line) || !line.starts_with("version ")) throw LoadError("checkpoint field 'version' is missing");
  const int version = parse_number<int>(line.substr(8), "version");
  if (version != kCheckpointVersion) {
    throw LoadError("checkpoint field 'version' is " + std::to_string(version) + ", this build reads " +
                    std::to_string(kCheckpointVersion));
  }
  CheckpointContents c;
  if (!std::getline(in, line) || !line.starts_with("kind ")) throw LoadError("checkpoint field 'kind' is missing");
  c.kind = line.substr(5);

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset, length;
    std::uint64_t checksum;
  };
  std::vector<Entry> entries;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.starts_with("field ")) {
      const std::size_t sp = line.find(' ', 6);
      if (sp == std::string::npos) throw LoadError("checkpoint manifest has malformed field line '" + line + "'");
      c.fields[line.substr(6, sp - 6)] = line.substr(sp + 1);
    } else if (line.starts_with("tensor ")) {
      std::istringstream is(line.substr(7));
      Entry e;
      std::string shape, sum;
      if (!(is >> e.name >> shape >> e.offset >> e.length >> sum)) {
        throw LoadError("checkpoint manifest has malformed tensor line '" + line + "'");
      }
      e.shape = parse_shape(shape, e.name);
      e.checksum = 0;
      auto [p, ec] = std::from_chars(sum.data(), sum.data() + sum.size(), e.checksum, 16);
      if (ec != std::errc() || p != sum.data() + sum.size()) throw LoadError("checkpoint field 'checksum of " + e.name + "' is malformed");
      if (e.length != shape_numel(e.shape) * 8) {
        throw LoadError("checkpoint field 'length of " + e.name + "' does not match its shape");
      }
      entries.push_back(std::move(e));
    } else {
      throw LoadError("checkpoint manifest has unrecognised line '" + line + "'");
    }
  }
  if (!ended) throw LoadError("checkpoint manifest is truncated (no 'end' line)");

  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t expected_offset = 0;
  for (const auto& e : entries) {
    if (e.offset != expected_offset || e.offset + e.length > data.size()) {
      throw LoadError("checkpoint field 'offset of " + e.name + "' points outside the data region");
    }
    std::span<const unsigned char> blob(data.data() + e.offset, e.length);
    if (fnv1a64(blob) != e.checksum) throw LoadError("checksum mismatch for tensor '" + e.name + "'");
    c.tensors.emplace(e.name, Tensor(e.shape, decode(blob)));
    expected_offset += e.length;
  }
  if (expected_offset != data.size()) throw LoadError("checkpoint data region has trailing bytes");
  return c;
}

void save_base_checkpoint(const BaseParameters& base, const std::filesystem::path& path) {
  CheckpointContents c;
  c.kind = "base";
  put_config(c, base.config);
  c.tensors = base.tensors;
  write_checkpoint(c, path);
}

BaseParameters load_base_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  CheckpointContents c = read_checkpoint(path);
  if (c.kind != "base") throw LoadError("checkpoint field 'kind' is '" + c.kind + "', expected 'base'");
  BaseParameters base;
  base.config = get_config(c);
  ModelConfig shape_config = base.config;
  if (expected) {
    // Shapes first, so the error names the first offending tensor.
    check_shapes(c.tensors, encoder_parameter_shapes(*expected, true), true);
    check_config_matches(base.config, *expected);
    shape_config = *expected;
  }
  try {
    shape_config.validate();
  } catch (const InputError& e) {
    throw LoadError(std::string("checkpoint config invalid: ") + e.what());
  }
  check_shapes(c.tensors, encoder_parameter_shapes(shape_config, true), true);
  base.tensors = std::move(c.tensors);
  return base;
}

void save_task_checkpoint(const TaskArtifact& art, const ModelConfig& config, const std::filesystem::path& path) {
  CheckpointContents c;
  c.kind = "task";
  put_config(c, config);
  c.fields["task.id"] = art.task_id;
  c.fields["task.strategy"] = format_strategy(art.strategy);
  c.fields["task.num_classes"] = std::to_string(art.num_classes);
  c.fields["task.seed"] = std::to_string(art.metadata.seed);
  for (const auto& [k, v] : art.metadata.hyperparameters) c.fields["hyper." + k] = v;
  for (const auto& [k, v] : art.metadata.metrics) c.fields["metric." + k] = format_double(v);
  c.tensors = art.parameters;
  if (art.optimizer_state) {
    const auto& st = *art.optimizer_state;
    c.fields["optimizer.step"] = std::to_string(st.step);
    for (const auto& [name, m] : st.first_moment) {
      c.tensors.emplace(std::string(kMomentPrefix) + name, Tensor({m.size()}, m));
    }
    for (const auto& [name, v] : st.second_moment) {
      c.tensors.emplace(std::string(kSecondMomentPrefix) + name, Tensor({v.size()}, v));
    }
  }
  write_checkpoint(c, path);
}

TaskArtifact load_task_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
  CheckpointContents c = read_checkpoint(path);
  if (c.kind != "task") throw LoadError("checkpoint field 'kind' is '" + c.kind + "', expected 'task'");
  check_config_matches(get_config(c), config);
  TaskArtifact art;
  art.task_id = required_field(c, "task.id");
  try {
    art.strategy = parse_strategy(required_field(c, "task.strategy"));
    validate_strategy(art.strategy, config);
  } catch (const Error& e) {
    throw LoadError(std::string("checkpoint field 'task.strategy' invalid: ") + e.what());
  }
  art.num_classes = parse_number<std::size_t>(required_field(c, "task.num_classes"), "task.num_classes");
  art.metadata.seed = parse_number<std::uint64_t>(required_field(c, "task.seed"), "task.seed");
  for (const auto& [k, v] : c.fields) {
    if (k.starts_with("hyper.")) art.metadata.hyperparameters[k.substr(6)] = v;
    if (k.starts_with("metric.")) art.metadata.metrics[k.substr(7)] = parse_number<double>(v, k);
  }
  if (c.fields.contains("optimizer.step")) {
    AdamState st;
    st.step = parse_number<std::size_t>(c.fields["optimizer.step"], "optimizer.step");
    art.optimizer_state = std::move(st);
  }
  for (auto& [name, t] : c.tensors) {
    if (name.starts_with(kMomentPrefix) || name.starts_with(kSecondMomentPrefix)) {
      if (!art.optimizer_state) throw LoadError("checkpoint field 'optimizer.step' missing for optimizer tensors");
      auto values = std::vector<double>(t.values().begin(), t.values().end());
      if (name.starts_with(kMomentPrefix)) {
        art.optimizer_state->first_moment[name.substr(kMomentPrefix.size())] = std::move(values);
      } else {
        art.optimizer_state->second_moment[name.substr(kSecondMomentPrefix.size())] = std::move(values);
      }
    } else {
      art.parameters.emplace(name, t);
    }
  }
  check_shapes(art.parameters, task_model_shapes(config, art.strategy, art.num_classes), false);
  if (!art.parameters.contains(names::kHeadWeight) || !art.parameters.contains(names::kHeadBias)) {
    throw LoadError("task checkpoint is missing its classification head");
  }
  return art;
}

void write_task_meta(const TaskArtifact& art, const std::filesystem::path& path) {
  nlohmann::json j;
  j["task_id"] = art.task_id;
  j["strategy"] = format_strategy(art.strategy);
  j["num_classes"] = art.num_classes;
  j["seed"] = art.metadata.seed;
  j["hyperparameters"] = art.metadata.hyperparameters;
  j["metrics"] = art.metadata.metrics;
  j["trained_parameters"] = art.parameter_count();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

}  // namespace adapterlab

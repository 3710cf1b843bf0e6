#pragma once

// Versioned plain-text checkpoints. Reals are written with 17 significant
// digits so a save/load round trip is exact.

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "swarmlearn/meta_optimizer.hpp"
#include "swarmlearn/objectives.hpp"
#include "swarmlearn/optim.hpp"

namespace swarmlearn {

struct Checkpoint {
  AblationLevel level = AblationLevel::proposed;
  Family family = Family::quadratic;
  double alpha = 10.0;  // Rastrigin amplitude of the training distribution
  double lambda = 1.0;
  std::size_t epoch = 0;  // completed epochs
  double h0 = std::numeric_limits<double>::quiet_NaN();
  MetaParams params;
  AdamState adam;
};

namespace detail {

inline constexpr const char* checkpoint_magic = "swarmlearn-checkpoint";
inline constexpr int checkpoint_version = 1;

inline void write_tensor(std::ostream& os, const std::string& tag, const char* name, const Matrix& m) {
  os << tag << ' ' << name << ' ' << m.rows() << ' ' << m.cols();
  for (double v : m.data()) os << ' ' << format_real(v);
  os << '\n';
}

inline std::size_t parse_count(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw config_error("checkpoint field '" + key + "' is not a count: '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline std::string to_text(const Checkpoint& ck) {
  using detail::format_real;
  std::ostringstream os;
  const ModelConfig& c = ck.params.config;
  os << detail::checkpoint_magic << ' ' << detail::checkpoint_version << '\n';
  os << "level " << to_string(ck.level) << '\n';
  os << "family " << to_string(ck.family) << '\n';
  os << "alpha " << format_real(ck.alpha) << '\n';
  os << "lambda " << format_real(ck.lambda) << '\n';
  os << "epoch " << ck.epoch << '\n';
  os << "h0 " << format_real(ck.h0) << '\n';
  os << "n " << c.n << '\n';
  os << "hidden " << c.hidden << '\n';
  os << "step_scale " << format_real(c.step_scale) << '\n';
  os << "gamma " << format_real(c.gamma) << '\n';
  os << "length_scale " << format_real(c.length_scale) << '\n';
  os << "momentum_decay " << format_real(c.swarm.momentum_decay) << '\n';
  os << "attraction_scale " << format_real(c.swarm.attraction_scale) << '\n';
  os << "arch " << c.arch.momentum << c.arch.velocity << c.arch.attraction << c.arch.intra_attention
     << c.arch.inter_attention << '\n';
  os << "adam_step " << ck.adam.step << '\n';
  os << "adam_skipped " << ck.adam.skipped << '\n';
  const auto tensors = ck.params.tensors();
  for (std::size_t i = 0; i < MetaParams::tensor_count; ++i) {
    detail::write_tensor(os, "tensor", MetaParams::names()[i], *tensors[i]);
  }
  if (!ck.adam.m.empty()) {
    for (std::size_t i = 0; i < MetaParams::tensor_count; ++i) {
      detail::write_tensor(os, "adam_m", MetaParams::names()[i], ck.adam.m[i]);
      detail::write_tensor(os, "adam_v", MetaParams::names()[i], ck.adam.v[i]);
    }
  }
  return os.str();
}

inline Checkpoint from_text(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != detail::checkpoint_magic) throw config_error("not a checkpoint file");
  if (version != detail::checkpoint_version) {
    throw config_error("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::string> scalars;
  std::map<std::string, Matrix> tensors, adam_m, adam_v;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "tensor" || key == "adam_m" || key == "adam_v") {
      std::string name, r, c;
      ls >> name >> r >> c;
      const std::size_t rows = detail::parse_count(r, name), cols = detail::parse_count(c, name);
      Matrix m(rows, cols);
      std::string tok;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (!(ls >> tok)) throw config_error("checkpoint tensor " + name + " is truncated");
        m[i] = detail::parse_real(tok);
      }
      auto& dest = key == "tensor" ? tensors : key == "adam_m" ? adam_m : adam_v;
      dest[name] = std::move(m);
    } else {
      std::string value;
      ls >> value;
      scalars[key] = value;
    }
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = scalars.find(key);
    if (it == scalars.end()) throw config_error(std::string("checkpoint is missing '") + key + "'");
    return it->second;
  };
  Checkpoint ck;
  ck.level = parse_level(get("level"));
  ck.family = parse_family(get("family"));
  ck.alpha = detail::parse_real(get("alpha"));
  ck.lambda = detail::parse_real(get("lambda"));
  ck.epoch = detail::parse_count(get("epoch"), "epoch");
  ck.h0 = detail::parse_real(get("h0"));
  ModelConfig c;
  c.n = detail::parse_count(get("n"), "n");
  c.hidden = detail::parse_count(get("hidden"), "hidden");
  c.step_scale = detail::parse_real(get("step_scale"));
  c.gamma = detail::parse_real(get("gamma"));
  c.length_scale = detail::parse_real(get("length_scale"));
  c.swarm.momentum_decay = detail::parse_real(get("momentum_decay"));
  c.swarm.attraction_scale = detail::parse_real(get("attraction_scale"));
  const std::string& arch = get("arch");
  if (arch.size() != 5 || arch.find_first_not_of("01") != std::string::npos) {
    throw config_error("checkpoint field 'arch' must be five 0/1 flags");
  }
  c.arch = {arch[0] == '1', arch[1] == '1', arch[2] == '1', arch[3] == '1', arch[4] == '1'};
  ck.params = MetaParams::zeros(c);
  std::vector<Matrix> values;
  for (const char* name : MetaParams::names()) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw config_error(std::string("checkpoint is missing tensor ") + name);
    values.push_back(it->second);
  }
  ck.params.set_tensor_values(values);
  ck.adam.step = detail::parse_count(get("adam_step"), "adam_step");
  ck.adam.skipped = detail::parse_count(get("adam_skipped"), "adam_skipped");
  if (!adam_m.empty()) {
    for (const char* name : MetaParams::names()) {
      if (!adam_m.count(name) || !adam_v.count(name)) {
        throw config_error(std::string("checkpoint is missing optimizer moments for ") + name);
      }
      ck.adam.m.push_back(adam_m[name]);
      ck.adam.v.push_back(adam_v[name]);
    }
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw config_error("cannot write checkpoint " + path.string());
  os << to_text(ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_text(buf.str());
}

}  // namespace swarmlearn

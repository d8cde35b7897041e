#include "ldsa/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace ldsa {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (c == '/' || c == '\\') c = '_';
  return out;
}

void write_manifest_and_payloads(const std::string& dir, ordered_json header,
                                 const std::vector<NamedParam>& mats) {
  fs::create_directories(dir);
  ordered_json entries = ordered_json::array();
  for (const NamedParam& np : mats) {
    const std::string file = sanitize(np.name) + ".csv";
    save_csv(*np.value, (fs::path(dir) / file).string());
    entries.push_back(ordered_json{{"name", np.name},
                                   {"rows", np.value->rows},
                                   {"cols", np.value->cols},
                                   {"file", file}});
  }
  header["matrices"] = std::move(entries);
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
  f << header.dump(2) << '\n';
}

ordered_json read_manifest(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: cannot read manifest in " + dir);
  return ordered_json::parse(f);
}

// Fill the given parameter slots from the manifest, matching by name and
// insisting on exact shapes.
void load_payloads(const std::string& dir, const ordered_json& manifest,
                   const std::vector<NamedParam>& mats) {
  std::map<std::string, const ordered_json*> by_name;
  for (const auto& e : manifest.at("matrices")) by_name[e.at("name")] = &e;
  for (const NamedParam& np : mats) {
    auto it = by_name.find(np.name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: missing matrix '" + np.name + "' in " + dir);
    }
    const ordered_json& e = *it->second;
    Matrix m = load_csv((fs::path(dir) / e.at("file").get<std::string>()).string());
    if (m.rows != e.at("rows").get<std::size_t>() || m.cols != e.at("cols").get<std::size_t>()) {
      throw ShapeError("checkpoint: payload for '" + np.name + "' is " + m.shape() +
                       ", manifest says " + std::to_string(e.at("rows").get<std::size_t>()) +
                       "x" + std::to_string(e.at("cols").get<std::size_t>()));
    }
    if (m.rows != np.value->rows || m.cols != np.value->cols) {
      throw ShapeError("checkpoint: matrix '" + np.name + "' is " + m.shape() +
                       ", expected " + np.value->shape());
    }
    *np.value = std::move(m);
  }
}

}  // namespace

std::string config_to_json(const EncoderConfig& cfg) {
  ordered_json j;
  j["variant"] = to_string(cfg.variant);
  j["n_blocks"] = cfg.n_blocks;
  j["d"] = cfg.d;
  j["h"] = cfg.h;
  j["c"] = cfg.c;
  j["conv_kernel"] = cfg.conv_kernel;
  j["ffn_inner"] = cfg.ffn_inner;
  j["t_max"] = cfg.t_max;
  j["feat_dim"] = cfg.feat_dim;
  return j.dump(2) + "\n";
}

EncoderConfig config_from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  EncoderConfig cfg;
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.n_blocks = j.at("n_blocks").get<std::size_t>();
  cfg.d = j.at("d").get<std::size_t>();
  cfg.h = j.at("h").get<std::size_t>();
  cfg.c = j.at("c").get<std::size_t>();
  cfg.conv_kernel = j.at("conv_kernel").get<std::size_t>();
  cfg.ffn_inner = j.at("ffn_inner").get<std::size_t>();
  cfg.t_max = j.at("t_max").get<std::size_t>();
  cfg.feat_dim = j.at("feat_dim").get<std::size_t>();
  cfg.validate();
  return cfg;
}

void save_config(const EncoderConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_config: cannot open " + path);
  f << config_to_json(cfg);
}

EncoderConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save_sa_params(const SaParams& p, const std::string& dir) {
  ordered_json header{{"format", "attention-weights-v1"},
                      {"variant", "sa"},
                      {"heads", p.heads()},
                      {"d", p.model_dim()}};
  write_manifest_and_payloads(dir, header, collect_params(const_cast<SaParams&>(p)));
}

SaParams load_sa_params(const std::string& dir) {
  const ordered_json m = read_manifest(dir);
  if (m.at("variant") != "sa") throw std::runtime_error("checkpoint: not an SA manifest");
  const std::size_t d = m.at("d").get<std::size_t>();
  const std::size_t h = m.at("heads").get<std::size_t>();
  Rng rng(0);
  SaParams p = init_sa_params(d, h, rng);
  load_payloads(dir, m, collect_params(p));
  return p;
}

void save_dsa_params(const DsaParams& p, const std::string& dir) {
  ordered_json header{{"format", "attention-weights-v1"},
                      {"variant", "dsa"},
                      {"heads", p.heads()},
                      {"d", p.model_dim()},
                      {"t_max", p.t_max}};
  write_manifest_and_payloads(dir, header, collect_params(const_cast<DsaParams&>(p)));
}

DsaParams load_dsa_params(const std::string& dir) {
  const ordered_json m = read_manifest(dir);
  if (m.at("variant") != "dsa") throw std::runtime_error("checkpoint: not a DSA manifest");
  Rng rng(0);
  DsaParams p = init_dsa_params(m.at("d").get<std::size_t>(), m.at("heads").get<std::size_t>(),
                                m.at("t_max").get<std::size_t>(), rng);
  load_payloads(dir, m, collect_params(p));
  return p;
}

void save_ldsa_params(const LdsaParams& p, const std::string& dir) {
  ordered_json header{{"format", "attention-weights-v1"},
                      {"variant", "ldsa"},
                      {"heads", p.heads()},
                      {"d", p.model_dim()},
                      {"c", p.context}};
  write_manifest_and_payloads(dir, header, collect_params(const_cast<LdsaParams&>(p)));
}

LdsaParams load_ldsa_params(const std::string& dir) {
  const ordered_json m = read_manifest(dir);
  if (m.at("variant") != "ldsa") throw std::runtime_error("checkpoint: not an LDSA manifest");
  Rng rng(0);
  LdsaParams p = init_ldsa_params(m.at("d").get<std::size_t>(), m.at("heads").get<std::size_t>(),
                                  m.at("c").get<std::size_t>(), rng);
  load_payloads(dir, m, collect_params(p));
  return p;
}

void save_encoder_params(const EncoderConfig& cfg, const EncoderParams& p,
                         const std::string& dir) {
  ordered_json header{{"format", "encoder-weights-v1"},
                      {"variant", to_string(cfg.variant)},
                      {"heads", cfg.h},
                      {"d", cfg.d},
                      {"n_blocks", cfg.n_blocks},
                      {"positional_encoding", p.frontend.positional_encoding}};
  write_manifest_and_payloads(dir, header, collect_params(const_cast<EncoderParams&>(p)));
}

EncoderParams load_encoder_params(const EncoderConfig& cfg, const std::string& dir) {
  const ordered_json m = read_manifest(dir);
  if (m.at("variant").get<std::string>() != to_string(cfg.variant)) {
    throw std::runtime_error("checkpoint: manifest variant '" +
                             m.at("variant").get<std::string>() + "' does not match config '" +
                             to_string(cfg.variant) + "'");
  }
  Rng rng(0);
  EncoderParams p =
      init_encoder_params(cfg, rng, m.value("positional_encoding", true));
  load_payloads(dir, m, collect_params(p));
  return p;
}

}  // namespace ldsa

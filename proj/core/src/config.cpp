#include "prodsearch/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "prodsearch/build_info.hpp"
#include "prodsearch/errors.hpp"

namespace prodsearch {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    auto item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  const auto t = trim(s);
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size() || std::isnan(v)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(s) + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += fmt(items[i]);
  }
  return out;
}

std::string_view to_string(ProductTextMode mode) {
  return mode == ProductTextMode::TitleOnly ? "title" : "title_description";
}

ProductTextMode parse_text_mode(std::string_view s) {
  if (s == "title") return ProductTextMode::TitleOnly;
  if (s == "title_description") return ProductTextMode::TitleAndDescription;
  throw ConfigError("data.product_text: expected title or title_description, got '" + std::string(s) + "'");
}

std::string_view to_string(MapForm form) { return form == MapForm::MeanPrecision ? "mean_precision" : "conventional"; }

MapForm parse_map_form(std::string_view s) {
  if (s == "mean_precision") return MapForm::MeanPrecision;
  if (s == "conventional") return MapForm::Conventional;
  throw ConfigError("eval.map_form: expected mean_precision or conventional, got '" + std::string(s) + "'");
}

std::string_view to_string(RecallCounting c) { return c == RecallCounting::Classes ? "classes" : "products"; }

RecallCounting parse_recall_counting(std::string_view s) {
  if (s == "classes") return RecallCounting::Classes;
  if (s == "products") return RecallCounting::Products;
  throw ConfigError("eval.recall_counting: expected classes or products, got '" + std::string(s) + "'");
}

template <typename F>
auto wrap_parse(std::string_view key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(std::string(key), 0) == 0) throw;
    throw ConfigError(std::string(key) + ": " + msg);
  }
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&](std::string section, std::string key, auto get, auto set) {
      f.push_back({std::move(section), std::move(key), get, set});
    };
    add("data", "products", [](const RunConfig& c) { return c.data.products.string(); },
        [](RunConfig& c, std::string_view v) { c.data.products = trim(v); });
    add("data", "queries", [](const RunConfig& c) { return c.data.queries.string(); },
        [](RunConfig& c, std::string_view v) { c.data.queries = trim(v); });
    add("data", "labels", [](const RunConfig& c) { return c.data.labels.string(); },
        [](RunConfig& c, std::string_view v) { c.data.labels = trim(v); });
    add("data", "product_text", [](const RunConfig& c) { return std::string(to_string(c.product_text)); },
        [](RunConfig& c, std::string_view v) { c.product_text = parse_text_mode(trim(v)); });

    add("tokenizer", "kind", [](const RunConfig& c) { return std::string(to_string(c.tokenizer)); },
        [](RunConfig& c, std::string_view v) {
          c.tokenizer = wrap_parse("tokenizer.kind", [&] { return parse_tokenizer_kind(trim(v)); });
        });
    add("tokenizer", "vocab_size", [](const RunConfig& c) { return std::to_string(c.vocab_size); },
        [](RunConfig& c, std::string_view v) { c.vocab_size = parse_uint("tokenizer.vocab_size", v); });
    add("tokenizer", "brands", [](const RunConfig& c) { return c.brands.string(); },
        [](RunConfig& c, std::string_view v) { c.brands = trim(v); });
    add("tokenizer", "unigram_seed_multiplier",
        [](const RunConfig& c) { return fmt_double(c.unigram.seed_multiplier); },
        [](RunConfig& c, std::string_view v) {
          c.unigram.seed_multiplier = parse_double("tokenizer.unigram_seed_multiplier", v);
        });
    add("tokenizer", "unigram_prune_fraction",
        [](const RunConfig& c) { return fmt_double(c.unigram.prune_fraction); },
        [](RunConfig& c, std::string_view v) {
          c.unigram.prune_fraction = parse_double("tokenizer.unigram_prune_fraction", v);
        });
    add("tokenizer", "unigram_em_iterations",
        [](const RunConfig& c) { return std::to_string(c.unigram.em_iterations); },
        [](RunConfig& c, std::string_view v) {
          c.unigram.em_iterations = parse_uint("tokenizer.unigram_em_iterations", v);
        });

    add("model", "variant", [](const RunConfig& c) { return std::string(to_string(c.variant)); },
        [](RunConfig& c, std::string_view v) {
          c.variant = wrap_parse("model.variant", [&] { return parse_model_variant(trim(v)); });
        });
    add("model", "dim", [](const RunConfig& c) { return std::to_string(c.dim); },
        [](RunConfig& c, std::string_view v) { c.dim = parse_uint("model.dim", v); });

    add("train", "margin", [](const RunConfig& c) { return fmt_double(c.train.margin); },
        [](RunConfig& c, std::string_view v) { c.train.margin = parse_double("train.margin", v); });
    add("train", "learning_rate", [](const RunConfig& c) { return fmt_double(c.train.learning_rate); },
        [](RunConfig& c, std::string_view v) { c.train.learning_rate = parse_double("train.learning_rate", v); });
    add("train", "batch_size", [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
        [](RunConfig& c, std::string_view v) { c.train.batch_size = parse_uint("train.batch_size", v); });
    add("train", "epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
        [](RunConfig& c, std::string_view v) { c.train.epochs = parse_uint("train.epochs", v); });
    add("train", "optimizer", [](const RunConfig& c) { return std::string(to_string(c.train.optimizer)); },
        [](RunConfig& c, std::string_view v) {
          c.train.optimizer = wrap_parse("train.optimizer", [&] { return parse_optimizer_kind(trim(v)); });
        });
    add("train", "adam_beta1", [](const RunConfig& c) { return fmt_double(c.train.adam_beta1); },
        [](RunConfig& c, std::string_view v) { c.train.adam_beta1 = parse_double("train.adam_beta1", v); });
    add("train", "adam_beta2", [](const RunConfig& c) { return fmt_double(c.train.adam_beta2); },
        [](RunConfig& c, std::string_view v) { c.train.adam_beta2 = parse_double("train.adam_beta2", v); });
    add("train", "adam_epsilon", [](const RunConfig& c) { return fmt_double(c.train.adam_epsilon); },
        [](RunConfig& c, std::string_view v) { c.train.adam_epsilon = parse_double("train.adam_epsilon", v); });

    add("index", "gamma", [](const RunConfig& c) { return c.gamma ? fmt_double(*c.gamma) : std::string("calibrate"); },
        [](RunConfig& c, std::string_view v) {
          const auto t = trim(v);
          if (t == "calibrate") {
            c.gamma.reset();
          } else {
            c.gamma = parse_double("index.gamma", t);
          }
        });
    add("index", "calibration_fraction", [](const RunConfig& c) { return fmt_double(c.calibration_fraction); },
        [](RunConfig& c, std::string_view v) {
          c.calibration_fraction = parse_double("index.calibration_fraction", v);
        });

    add("eval", "ks", [](const RunConfig& c) { return join(c.ks, [](std::size_t k) { return std::to_string(k); }); },
        [](RunConfig& c, std::string_view v) {
          c.ks.clear();
          for (const auto& item : split_list(v)) c.ks.push_back(parse_uint("eval.ks", item));
        });
    add("eval", "rescoring", [](const RunConfig& c) { return std::string(to_string(c.rescoring)); },
        [](RunConfig& c, std::string_view v) {
          c.rescoring = wrap_parse("eval.rescoring", [&] { return parse_rescoring_mode(trim(v)); });
        });
    add("eval", "partial_as_relevant", [](const RunConfig& c) { return fmt_bool(c.partial_as_relevant); },
        [](RunConfig& c, std::string_view v) { c.partial_as_relevant = parse_bool("eval.partial_as_relevant", v); });
    add("eval", "map_form", [](const RunConfig& c) { return std::string(to_string(c.map_form)); },
        [](RunConfig& c, std::string_view v) { c.map_form = parse_map_form(trim(v)); });
    add("eval", "recall_counting", [](const RunConfig& c) { return std::string(to_string(c.recall_counting)); },
        [](RunConfig& c, std::string_view v) { c.recall_counting = parse_recall_counting(trim(v)); });

    add("output", "dir", [](const RunConfig& c) { return c.output_dir.string(); },
        [](RunConfig& c, std::string_view v) { c.output_dir = trim(v); });

    add("ablate", "tokenizers",
        [](const RunConfig& c) { return join(c.grid_tokenizers, [](TokenizerKind k) { return std::string(to_string(k)); }); },
        [](RunConfig& c, std::string_view v) {
          c.grid_tokenizers.clear();
          for (const auto& item : split_list(v)) {
            c.grid_tokenizers.push_back(wrap_parse("ablate.tokenizers", [&] { return parse_tokenizer_kind(item); }));
          }
        });
    add("ablate", "mt", [](const RunConfig& c) { return join(c.grid_mt, [](bool b) { return fmt_bool(b); }); },
        [](RunConfig& c, std::string_view v) {
          c.grid_mt.clear();
          for (const auto& item : split_list(v)) c.grid_mt.push_back(parse_bool("ablate.mt", item));
        });
    add("ablate", "dims", [](const RunConfig& c) { return join(c.grid_dims, [](std::size_t d) { return std::to_string(d); }); },
        [](RunConfig& c, std::string_view v) {
          c.grid_dims.clear();
          for (const auto& item : split_list(v)) c.grid_dims.push_back(parse_uint("ablate.dims", item));
        });
    add("ablate", "variants",
        [](const RunConfig& c) { return join(c.grid_variants, [](ModelVariant m) { return std::string(to_string(m)); }); },
        [](RunConfig& c, std::string_view v) {
          c.grid_variants.clear();
          for (const auto& item : split_list(v)) {
            c.grid_variants.push_back(wrap_parse("ablate.variants", [&] { return parse_model_variant(item); }));
          }
        });

    add("run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, std::string_view v) {
          c.seed = parse_uint("run.seed", v);
          c.train.seed = c.seed;
        });
    return f;
  }();
  return table;
}

const Field& find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return f;
  }
  throw ConfigError("unknown configuration key '" + std::string(section) + "." + std::string(key) + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("tokenizer.vocab_size must be positive");
  if (dim == 0) throw ConfigError("model.dim must be positive");
  if (!(calibration_fraction > 0.0 && calibration_fraction <= 1.0)) {
    throw ConfigError("index.calibration_fraction must lie in (0, 1]");
  }
  if (ks.empty()) throw ConfigError("eval.ks needs at least one cutoff");
  for (auto k : ks) {
    if (k == 0) throw ConfigError("eval.ks entries must be at least 1");
  }
  if (!(unigram.seed_multiplier >= 1.0)) throw ConfigError("tokenizer.unigram_seed_multiplier must be at least 1");
  if (!(unigram.prune_fraction > 0.0 && unigram.prune_fraction < 1.0)) {
    throw ConfigError("tokenizer.unigram_prune_fraction must lie in (0, 1)");
  }
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  train.validate();
}

std::string RunConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::string RunConfig::provenance() const {
  return "build_version = " + std::string(build_version()) + "\n" + to_ini();
}

bool RunConfig::operator==(const RunConfig& other) const { return to_ini() == other.to_ini(); }

RunConfig parse_config(std::string_view ini_text) {
  boost::property_tree::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("malformed configuration (line " + std::to_string(e.line()) + "): " + e.message());
  }
  RunConfig config;
  // run.seed first so an explicit train section cannot be clobbered afterwards.
  if (auto seed = tree.get_optional<std::string>("run.seed")) find_field("run", "seed").set(config, *seed);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("configuration key '" + section + "' must live inside a [section]");
    }
    for (const auto& [key, value] : body) {
      if (section == "run" && key == "seed") continue;
      find_field(section, key).set(config, value.data());
    }
  }
  return config;
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + o + "' is not of the form section.key=value");
    }
    find_field(trim(std::string_view(o).substr(0, dot)), trim(std::string_view(o).substr(dot + 1, eq - dot - 1)))
        .set(config, std::string_view(o).substr(eq + 1));
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  RunConfig config;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read configuration file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    config = parse_config(text.str());
  }
  apply_overrides(config, overrides);
  config.validate();
  return config;
}

}  // namespace prodsearch

#include "urbanflux/model_io.hpp"

namespace urbanflux {

namespace {

Json envelope(const char* kind, const Regressor& model, const Provenance& prov) {
  Json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = kind;
  j["target"] = to_string(model.target());
  j["norm_info"] = model.norm_info();
  j["provenance"] = prov;
  return j;
}

void check_version(const Json& j, const std::string& ctx) {
  const int version = require<int>(j, "format_version", ctx);
  if (version != kModelFormatVersion) {
    throw ConfigError(ctx + ": unsupported format_version " + std::to_string(version));
  }
}

Provenance optional_provenance(const Json& j) {
  return j.contains("provenance") ? j.at("provenance").get<Provenance>() : Provenance{};
}

std::size_t expected_width(Target t) { return t == Target::Total ? 1 : kHours; }

}  // namespace

Json forest_to_json(const ForestModel& model) {
  Json j = envelope("rf", model, model.provenance);
  const ForestConfig& c = model.config();
  j["config"] = {{"n_trees", c.n_trees},
                 {"max_depth", c.max_depth},
                 {"min_leaf", c.min_leaf},
                 {"feature_subsample", c.feature_subsample},
                 {"bootstrap", c.bootstrap},
                 {"seed", c.seed}};
  Json outputs = Json::array();
  for (const auto& trees : model.outputs()) {
    Json jt = Json::array();
    for (const auto& t : trees) {
      Json nodes = Json::array();
      for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
      jt.push_back(std::move(nodes));
    }
    outputs.push_back(std::move(jt));
  }
  j["outputs"] = std::move(outputs);
  return j;
}

ForestModel forest_from_json(const Json& j, const std::string& ctx) {
  check_version(j, ctx);
  const Json& jc = j.at("config");
  ForestConfig c;
  c.n_trees = require<std::size_t>(jc, "n_trees", ctx);
  c.max_depth = require<std::size_t>(jc, "max_depth", ctx);
  c.min_leaf = require<std::size_t>(jc, "min_leaf", ctx);
  c.feature_subsample = require<double>(jc, "feature_subsample", ctx);
  c.bootstrap = require<bool>(jc, "bootstrap", ctx);
  c.seed = require<std::uint64_t>(jc, "seed", ctx);
  const Target target = target_from_string(require<std::string>(j, "target", ctx));
  ForestModel m(target, require<NormalizationInfo>(j, "norm_info", ctx), c);
  m.provenance = optional_provenance(j);
  const Json& outputs = j.at("outputs");
  if (outputs.size() != expected_width(target)) throw ShapeError(ctx + ": wrong number of output ensembles");
  for (const auto& jt : outputs) {
    std::vector<RegressionTree> trees;
    for (const auto& jn : jt) {
      RegressionTree t;
      for (const auto& node : jn) {
        if (!node.is_array() || node.size() != 5) throw ShapeError(ctx + ": malformed tree node");
        TreeNode n;
        n.feature = node[0].get<int>();
        n.threshold = node[1].get<double>();
        n.left = node[2].get<std::int32_t>();
        n.right = node[3].get<std::int32_t>();
        n.value = node[4].get<double>();
        t.nodes.push_back(n);
      }
      const auto count = static_cast<std::int32_t>(t.nodes.size());
      for (const auto& n : t.nodes) {
        if (n.feature >= static_cast<int>(kEnvWidth) ||
            (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))) {
          throw ShapeError(ctx + ": tree node refers outside the tree");
        }
      }
      if (t.nodes.empty()) throw ShapeError(ctx + ": empty tree");
      trees.push_back(std::move(t));
    }
    if (trees.empty()) throw ShapeError(ctx + ": empty ensemble");
    m.outputs().push_back(std::move(trees));
  }
  return m;
}

Json svr_to_json(const SvrModel& model) {
  Json j = envelope("svr", model, model.provenance);
  const SvrConfig& c = model.config();
  j["config"] = {{"epsilon", c.epsilon},
                 {"c_penalty", c.c_penalty},
                 {"learning_rate", c.learning_rate},
                 {"epochs", c.epochs},
                 {"batch_size", c.batch_size},
                 {"decay", c.decay},
                 {"seed", c.seed}};
  j["coefficients"] = model.coefficients();
  return j;
}

SvrModel svr_from_json(const Json& j, const std::string& ctx) {
  check_version(j, ctx);
  const Json& jc = j.at("config");
  SvrConfig c;
  c.epsilon = require<double>(jc, "epsilon", ctx);
  c.c_penalty = require<double>(jc, "c_penalty", ctx);
  c.learning_rate = require<double>(jc, "learning_rate", ctx);
  c.epochs = require<std::size_t>(jc, "epochs", ctx);
  c.batch_size = require<std::size_t>(jc, "batch_size", ctx);
  c.decay = require<bool>(jc, "decay", ctx);
  c.seed = require<std::uint64_t>(jc, "seed", ctx);
  const Target target = target_from_string(require<std::string>(j, "target", ctx));
  SvrModel m(target, require<NormalizationInfo>(j, "norm_info", ctx), c);
  m.provenance = optional_provenance(j);
  m.coefficients() = require<std::vector<std::vector<double>>>(j, "coefficients", ctx);
  if (m.coefficients().size() != expected_width(target)) throw ShapeError(ctx + ": wrong number of outputs");
  for (const auto& c2 : m.coefficients()) {
    if (c2.size() != kEnvWidth + 1) throw ShapeError(ctx + ": each output needs 18 coefficients");
  }
  return m;
}

void save_regressor(const std::filesystem::path& path, const Regressor& model) {
  if (const auto* mlp = dynamic_cast<const MlpModel*>(&model)) {
    save_model(path, *mlp);
  } else if (const auto* rf = dynamic_cast<const ForestModel*>(&model)) {
    write_json_file(path, forest_to_json(*rf));
  } else if (const auto* svr = dynamic_cast<const SvrModel*>(&model)) {
    write_json_file(path, svr_to_json(*svr));
  } else {
    throw ConfigError("cannot serialize model of algorithm " + model.algorithm());
  }
}

std::unique_ptr<Regressor> load_regressor(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  const std::string ctx = "model " + path.string();
  const std::string kind = require<std::string>(j, "kind", ctx);
  if (kind == "rf") return std::make_unique<ForestModel>(forest_from_json(j, ctx));
  if (kind == "svr") return std::make_unique<SvrModel>(svr_from_json(j, ctx));
  return std::make_unique<MlpModel>(load_mlp(path));
}

Provenance provenance_of(const Regressor& model) {
  if (const auto* mlp = dynamic_cast<const MlpModel*>(&model)) return mlp->provenance;
  if (const auto* rf = dynamic_cast<const ForestModel*>(&model)) return rf->provenance;
  if (const auto* svr = dynamic_cast<const SvrModel*>(&model)) return svr->provenance;
  return {};
}

}  // namespace urbanflux

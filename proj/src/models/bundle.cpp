#include <fstream>
#include <sstream>

#include "convkit/models/models.hpp"
#include "convkit/nn/checkpoint.hpp"

namespace convkit::models {

namespace {

constexpr int kBundleFormat = 1;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ModelError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelError("cannot write " + p.string());
  out << bytes;
  if (!out) throw ModelError("cannot write " + p.string());
}

std::uint64_t part_seed(std::uint64_t seed, std::uint64_t part) { return seed * 1000003ULL + part; }

}  // namespace

ModelBundle ModelBundle::create(SchemaPtr schema, VocabPtr vocab, const ModelConfig& cfg) {
  cfg.check();
  ModelBundle b;
  b.schema = std::move(schema);
  b.vocab = std::move(vocab);
  b.config = cfg;
  b.ner = std::make_unique<NerModel>(b.schema, b.vocab, cfg, part_seed(cfg.seed, 1));
  b.actions = std::make_unique<ActionModel>(b.schema, b.vocab, cfg, part_seed(cfg.seed, 2));
  b.arguments = std::make_unique<ArgumentModel>(b.schema, b.vocab, cfg, part_seed(cfg.seed, 3));
  return b;
}

void ModelBundle::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_file(dir / "ner.ckpt", nn::save_params(ner->params()));
  write_file(dir / "action.ckpt", nn::save_params(actions->params()));
  write_file(dir / "argument.ckpt", nn::save_params(arguments->params()));
  write_file(dir / "vocab.json", vocab->to_json().dump() + "\n");
  write_file(dir / "schema.json", dml::serialize_domain(*schema));
  nlohmann::ordered_json meta;
  meta["format"] = kBundleFormat;
  meta["schema_fingerprint"] = schema->fingerprint();
  meta["config"] = config.to_json();
  write_file(dir / "bundle.json", meta.dump(2) + "\n");
}

ModelBundle ModelBundle::load(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "bundle.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("bad bundle.json: " + std::string(e.what()));
  }
  if (meta.value("format", 0) != kBundleFormat) throw ModelError("unsupported bundle format");
  auto schema = std::make_shared<const dml::DomainSchema>(dml::parse_domain(read_file(dir / "schema.json")));
  if (schema->fingerprint() != meta.value("schema_fingerprint", std::string())) {
    throw ModelError("bundle schema does not match its recorded fingerprint");
  }
  std::shared_ptr<const context::Vocabulary> vocab;
  try {
    vocab = std::make_shared<const context::Vocabulary>(
        context::Vocabulary::from_json(nlohmann::json::parse(read_file(dir / "vocab.json"))));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("bad vocab.json: " + std::string(e.what()));
  }
  auto b = create(schema, vocab, ModelConfig::from_json(meta.at("config")));
  try {
    nn::load_params_into(b.ner->params(), read_file(dir / "ner.ckpt"));
    nn::load_params_into(b.actions->params(), read_file(dir / "action.ckpt"));
    nn::load_params_into(b.arguments->params(), read_file(dir / "argument.ckpt"));
  } catch (const nn::CheckpointError& e) {
    throw ModelError(std::string("bad checkpoint: ") + e.what());
  }
  return b;
}

ModelBundle ModelBundle::load(const std::filesystem::path& dir, const dml::DomainSchema& runtime_schema) {
  auto b = load(dir);
  if (b.schema->fingerprint() != runtime_schema.fingerprint()) {
    throw ModelError("bundle was trained for schema " + b.schema->fingerprint() + ", runtime schema is " +
                     runtime_schema.fingerprint());
  }
  return b;
}

}  // namespace convkit::models

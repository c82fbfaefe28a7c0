#include "rsvqa/pipelines/models.hpp"

#include <algorithm>
#include <numeric>

#include "rsvqa/common/errors.hpp"

namespace rsvqa::pipelines {

QuestionEncoder::QuestionEncoder(std::size_t vocab_size, std::size_t embed_width, std::size_t hidden, Rng& rng)
    : embed_(vocab_size, embed_width, rng), cell_(embed_width, hidden, rng) {}

nn::Tensor QuestionEncoder::operator()(std::span<const std::vector<std::size_t>* const> sequences) const {
  if (sequences.empty()) throw InvalidInput("question batch is empty");
  std::size_t longest = 0;
  for (const auto* s : sequences) {
    if (s->empty()) throw InvalidInput("question has no tokens");
    longest = std::max(longest, s->size());
  }
  const std::size_t batch = sequences.size(), hidden = cell_.hidden_size();
  auto h = nn::Tensor::zeros({batch, hidden});
  std::vector<std::size_t> ids(batch);
  for (std::size_t t = 0; t < longest; ++t) {
    bool all_active = true;
    std::vector<double> mask(batch * hidden, 1.0);
    for (std::size_t b = 0; b < batch; ++b) {
      const bool active = t < sequences[b]->size();
      ids[b] = active ? (*sequences[b])[t] : TokenVocabulary::kPad;
      if (!active) {
        all_active = false;
        std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b * hidden), hidden, 0.0);
      }
    }
    auto next = cell_(embed_(ids), h);
    if (all_active) {
      h = next;
    } else {
      auto m = nn::Tensor::from({batch, hidden}, std::move(mask));
      h = nn::add(nn::mul(m, next), nn::mul(nn::one_minus(m), h));
    }
  }
  return h;
}

std::vector<double> QuestionEncoder::encode(std::string_view question, const TokenVocabulary& vocab) const {
  const auto ids = vocab.encode(question);
  if (ids.empty()) throw InvalidInput("question is empty after tokenization");
  nn::NoGradGuard guard;
  const std::vector<std::size_t>* one[] = {&ids};
  return (*this)(one).values();
}

void QuestionEncoder::collect(nn::ParameterList& out, const std::string& prefix) const {
  embed_.collect(out, nn::join_name(prefix, "embed"));
  cell_.collect(out, nn::join_name(prefix, "gru"));
}

nn::Tensor e2e_fuse(const nn::Tensor& visual_projected, const nn::Tensor& question_projected) {
  if (visual_projected.shape() != question_projected.shape()) {
    throw ConfigError("projected visual " + nn::shape_string(visual_projected.shape()) + " and question " +
                      nn::shape_string(question_projected.shape()) + " features differ in size");
  }
  return nn::mul(visual_projected, question_projected);
}

nlohmann::json to_json(const EndToEndConfig& c) {
  return {{"embed_width", c.embed_width}, {"question_width", c.question_width}, {"joint_width", c.joint_width},
          {"hidden_width", c.hidden_width}, {"dropout", c.dropout}};
}

EndToEndConfig end_to_end_config_from_json(const nlohmann::json& j) {
  EndToEndConfig c;
  c.embed_width = j.value("embed_width", c.embed_width);
  c.question_width = j.value("question_width", c.question_width);
  c.joint_width = j.value("joint_width", c.joint_width);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.dropout = j.value("dropout", c.dropout);
  if (c.embed_width == 0 || c.question_width == 0 || c.joint_width == 0 || c.hidden_width == 0) {
    throw ConfigError("end-to-end widths must be positive");
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  return c;
}

EndToEndModel::EndToEndModel(const EndToEndConfig& config, std::size_t visual_width, std::size_t token_vocab,
                             std::size_t answer_vocab, Rng& rng)
    : config_(config),
      visual_width_(visual_width),
      token_vocab_(token_vocab),
      answer_vocab_(answer_vocab),
      question_(token_vocab, config.embed_width, config.question_width, rng),
      visual_proj_(visual_width, config.joint_width, rng),
      question_proj_(config.question_width, config.joint_width, rng),
      hidden_(config.joint_width, config.hidden_width, rng),
      output_(config.hidden_width, answer_vocab, rng) {}

nn::Tensor EndToEndModel::project_visual(const nn::Tensor& f_i, bool training, Rng& rng) const {
  if (f_i.rank() != 2 || f_i.dim(1) != visual_width_) {
    throw InvalidInput("visual feature must have length " + std::to_string(visual_width_));
  }
  return nn::dropout(nn::tanh(visual_proj_(f_i)), config_.dropout, rng, training);
}

nn::Tensor EndToEndModel::project_question(const nn::Tensor& f_q) const { return nn::tanh(question_proj_(f_q)); }

nn::Tensor EndToEndModel::answer_head(const nn::Tensor& f_a) const { return output_(nn::relu(hidden_(f_a))); }

nn::Tensor EndToEndModel::logits(SampleBatch batch, bool training, Rng& rng) const {
  std::vector<double> visual;
  std::vector<const std::vector<std::size_t>*> questions;
  for (const auto* s : batch) {
    if (s->visual.size() != visual_width_) {
      throw InvalidInput("sample for " + s->patch_id + " carries no visual feature of length " +
                         std::to_string(visual_width_));
    }
    visual.insert(visual.end(), s->visual.begin(), s->visual.end());
    questions.push_back(&s->tokens);
  }
  auto f_i = nn::Tensor::from({batch.size(), visual_width_}, std::move(visual));
  auto f_a = e2e_fuse(project_visual(f_i, training, rng), project_question(question_(questions)));
  return answer_head(f_a);
}

nlohmann::json EndToEndModel::config_json() const {
  auto j = to_json(config_);
  j["visual_width"] = visual_width_;
  j["token_vocab"] = token_vocab_;
  j["answer_vocab"] = answer_vocab_;
  return j;
}

void EndToEndModel::collect(nn::ParameterList& out, const std::string& prefix) const {
  question_.collect(out, nn::join_name(prefix, "question"));
  visual_proj_.collect(out, nn::join_name(prefix, "visual_proj"));
  question_proj_.collect(out, nn::join_name(prefix, "question_proj"));
  hidden_.collect(out, nn::join_name(prefix, "head.hidden"));
  output_.collect(out, nn::join_name(prefix, "head.output"));
}

std::string build_context(std::span<const corpus::ClassId> classes, const corpus::ClassTaxonomy& taxonomy) {
  std::vector<corpus::ClassId> ids(classes.begin(), classes.end());
  for (auto id : ids) taxonomy.at(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += ", ";
    out += taxonomy.at(id).name;
  }
  return out;
}

nlohmann::json to_json(const PromptConfig& c) {
  return {{"width", c.width}, {"heads", c.heads}, {"layers", c.layers}, {"ff_width", c.ff_width},
          {"max_len", c.max_len}, {"hidden_width", c.hidden_width}, {"dropout", c.dropout}};
}

PromptConfig prompt_config_from_json(const nlohmann::json& j) {
  PromptConfig c;
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.layers = j.value("layers", c.layers);
  c.ff_width = j.value("ff_width", c.ff_width);
  c.max_len = j.value("max_len", c.max_len);
  c.hidden_width = j.value("hidden_width", c.hidden_width);
  c.dropout = j.value("dropout", c.dropout);
  if (c.width == 0 || c.heads == 0 || c.width % c.heads != 0) {
    throw ConfigError("prompt width must be a positive multiple of heads");
  }
  if (c.max_len < 3) throw ConfigError("max_len must leave room for [CLS], [SEP] and one token");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  return c;
}

std::vector<std::size_t> prompt_tokens(std::string_view question, std::string_view context,
                                       const TokenVocabulary& vocab, std::size_t max_len) {
  auto q = vocab.encode(question);
  if (q.empty()) throw InvalidInput("question is empty after tokenization");
  auto c = vocab.encode(context, true);
  const std::size_t budget = max_len - 2;
  if (q.size() > budget) q.resize(budget);
  if (q.size() + c.size() > budget) c.resize(budget - q.size());
  std::vector<std::size_t> out{TokenVocabulary::kCls};
  out.insert(out.end(), q.begin(), q.end());
  out.push_back(TokenVocabulary::kSep);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

PromptModel::PromptModel(const PromptConfig& config, std::size_t token_vocab, std::size_t answer_vocab, Rng& rng)
    : config_(config),
      token_vocab_(token_vocab),
      answer_vocab_(answer_vocab),
      tokens_(token_vocab, config.width, rng),
      positions_(config.max_len, config.width, rng) {
  for (std::size_t i = 0; i < config.layers; ++i) layers_.emplace_back(config.width, config.heads, config.ff_width, rng);
  hidden_ = nn::Linear(config.width, config.hidden_width, rng);
  output_ = nn::Linear(config.hidden_width, answer_vocab, rng);
}

nn::Tensor PromptModel::pooled(std::span<const std::size_t> tokens) const {
  if (tokens.empty() || tokens.size() > config_.max_len) {
    throw InvalidInput("prompt length must be in [1, " + std::to_string(config_.max_len) + "]");
  }
  std::vector<std::size_t> pos(tokens.size());
  std::iota(pos.begin(), pos.end(), 0);
  auto x = nn::add(tokens_(tokens), positions_(pos));
  for (const auto& layer : layers_) x = layer(x);
  return nn::slice_rows(x, 0, 1);
}

nn::Tensor PromptModel::logits(SampleBatch batch, bool training, Rng& rng) const {
  if (batch.empty()) throw InvalidInput("prompt batch is empty");
  std::vector<nn::Tensor> rows;
  rows.reserve(batch.size());
  for (const auto* s : batch) rows.push_back(pooled(s->tokens));
  auto f_a = nn::concat_rows(rows);
  auto h = nn::dropout(nn::sigmoid(f_a), config_.dropout, rng, training);
  return output_(nn::relu(hidden_(h)));
}

nlohmann::json PromptModel::config_json() const {
  auto j = to_json(config_);
  j["token_vocab"] = token_vocab_;
  j["answer_vocab"] = answer_vocab_;
  return j;
}

void PromptModel::collect(nn::ParameterList& out, const std::string& prefix) const {
  tokens_.collect(out, nn::join_name(prefix, "tokens"));
  positions_.collect(out, nn::join_name(prefix, "positions"));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(out, nn::join_name(prefix, "layer" + std::to_string(i)));
  }
  hidden_.collect(out, nn::join_name(prefix, "head.hidden"));
  output_.collect(out, nn::join_name(prefix, "head.output"));
}

}  // namespace rsvqa::pipelines

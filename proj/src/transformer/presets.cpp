#include "dtc/error.hpp"
#include "dtc/transformer.hpp"

namespace dtc::tfm {

std::vector<std::string> preset_names() { return {"bert-toy", "roberta-toy", "distil-toy", "deberta-toy"}; }

Preset preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  p.encoder = EncoderConfig{};
  p.mlm.steps = 1500;
  p.mlm.batch_size = 32;
  p.finetune.steps = 600;
  p.finetune.batch_size = 32;
  if (name == "bert-toy") return p;
  if (name == "roberta-toy") {
    p.mlm.steps = 3000;
    return p;
  }
  if (name == "distil-toy") {
    p.encoder.layers = 2;
    p.pretrain = false;
    p.teacher = "bert-toy";
    p.student_layers = {0, 2};
    return p;
  }
  if (name == "deberta-toy") {
    p.encoder.kind = AttentionKind::disentangled;
    p.encoder.rel_window = 8;
    return p;
  }
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown transformer preset '" + std::string(name) + "' (valid: " + valid + ")");
}

}  // namespace dtc::tfm

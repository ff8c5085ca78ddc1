#include "dimerge/presets.hpp"

#include "dimerge/error.hpp"

namespace dimerge {
namespace {

std::vector<std::pair<std::string, std::string>> decoder_labels() {
    return {
        {"embed_tokens", "embed"},
        {"lm_head", "lm_head"},
        {"self_attn.q_proj", "attn.q"},
        {"self_attn.k_proj", "attn.k"},
        {"self_attn.v_proj", "attn.v"},
        {"self_attn.o_proj", "attn.o"},
        {"self_attn.q_norm", "attn.q_norm"},
        {"self_attn.k_norm", "attn.k_norm"},
        {"mlp.gate_proj", "mlp.gate"},
        {"mlp.up_proj", "mlp.up"},
        {"mlp.down_proj", "mlp.down"},
        {"input_layernorm", "norm.input"},
        {"post_attention_layernorm", "norm.post_attn"},
        {"model.norm", "norm.final"},
    };
}

FamilyPreset decoder_family(std::string name, std::vector<RemapRule> remap) {
    FamilyPreset p;
    p.name = std::move(name);
    p.anchor_remap = std::move(remap);
    p.scope_keys = ScopeKeys{{"*embed_tokens*"}, {"*lm_head*"}, "model.layers.{n}.*"};
    p.schema.layer_index = LayerIndexPattern("model.layers.{n}.*");
    p.schema.module_labels = decoder_labels();
    return p;
}

}  // namespace

FamilyPreset family_preset(const std::string& name) {
    // Older transformers releases nest the language model as
    // "language_model.model.*"; newer ones use "model.language_model.*".
    if (name == "llama" || name == "qwen2") {
        return decoder_family(name, {{"language_model.model.", "model."},
                                     {"language_model.lm_head.", "lm_head."},
                                     {"model.language_model.", "model."}});
    }
    if (name == "qwen3") {
        return decoder_family(name, {{"model.language_model.", "model."}});
    }
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown model family preset '" + name + "'");
}

std::vector<std::string> family_preset_names() { return {"llama", "qwen2", "qwen3"}; }

}  // namespace dimerge

#pragma once

#include <string>
#include <vector>

#include "dimerge/diagnostics.hpp"
#include "dimerge/scope.hpp"
#include "dimerge/tensor_store.hpp"

namespace dimerge {

/// Key conventions of one shared-backbone family: how the multimodal anchor
/// names its language model, which keys are embeddings and head, and how
/// keys split into layers and module types.
struct FamilyPreset {
    std::string name;
    std::vector<RemapRule> anchor_remap;
    ScopeKeys scope_keys;
    ModuleKeySchema schema;
};

/// "llama" (LLaVA-style anchors), "qwen2" (LLaVA-OneVision-style), "qwen3" (Qwen3-VL).
FamilyPreset family_preset(const std::string& name);
std::vector<std::string> family_preset_names();

}  // namespace dimerge

#ifndef ADAPTREE_CODEGEN_HPP
#define ADAPTREE_CODEGEN_HPP

#include "adaptree/engine.hpp"
#include "adaptree/model_io.hpp"

#include <map>
#include <optional>
#include <string>

namespace adaptree {

enum class CodegenMode { Static, Dynamic };

std::string to_string(CodegenMode mode);
CodegenMode parse_codegen_mode(std::string_view text);

struct CodegenConfig {
    CodegenMode mode = CodegenMode::Static;
    std::optional<PolicyConfig> policy; // required in dynamic mode
    int batch_size = 1;                 // B
    /// Emit the LEAVES array; defaults to "model is not folded". Setting it
    /// against the model layout is an error.
    std::optional<bool> emit_leaves;
};

void check_codegen_config(const FlatEnsemble<std::int32_t>& flat, const CodegenConfig& cfg);

/// C99 integer types chosen for the emitted arrays.
struct CTypes {
    std::string input;  // input_t
    std::string alpha;  // node threshold / folded leaf
    std::string leaf;   // leaf_t
};

CTypes c_types(const FlatEnsemble<std::int32_t>& flat);

/// Emits `model_data.h`, `inference.h` and `inference.c` (file name -> text).
/// The output depends only on the model and the config.
std::map<std::string, std::string> emit_source(const FlatEnsemble<std::int32_t>& flat, const CodegenConfig& cfg);
/// Rejects real-valued models: emitted code is integer-only.
std::map<std::string, std::string> emit_source(const AnyEnsemble& model, const CodegenConfig& cfg);

/// CSV `input_0..input_{F-1},expected_class,expected_trees`, one row per
/// (already quantized) input, computed by the engine under `cfg`.
std::string emit_golden_vectors(const FlatEnsemble<std::int32_t>& flat, const RowMatrix<std::int32_t>& inputs,
                                const CodegenConfig& cfg);

/// The engine configuration equivalent to a codegen config.
EngineConfig engine_config(const CodegenConfig& cfg);

} // namespace adaptree

#endif

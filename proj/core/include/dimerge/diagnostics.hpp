#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dimerge/geometry.hpp"
#include "dimerge/scope.hpp"
#include "dimerge/tensor_store.hpp"

namespace dimerge {

/// Groups backbone keys into (layer, module type) cells. The first label
/// whose substring occurs in a key wins; keys without one go to "other".
struct ModuleKeySchema {
    LayerIndexPattern layer_index{"*.layers.{n}.*"};
    std::vector<std::pair<std::string, std::string>> module_labels;

    std::string label_for(const std::string& key) const;
};

/// One heatmap cell. Norms are Frobenius norms of the group's concatenated
/// residuals; direction statistics are means over all 2D columns in the group
/// and are empty when the group holds only 1D tensors.
struct HeatmapRow {
    int layer = -1;
    std::string module;
    double residual_norm_ml = 0;
    double residual_norm_mm = 0;
    std::optional<double> mean_dir_dev_ml;
    std::optional<double> mean_dir_dev_mm;
    std::optional<double> mean_cross_cosine;
    std::size_t tensors = 0;
    std::size_t elements = 0;
};

struct Diagnosis {
    std::vector<HeatmapRow> rows;
    std::vector<std::string> warnings;
};

/// Residual heterogeneity per (layer, module), rows sorted by layer then by
/// label order ("other" last). Keys with no parsed layer go under layer -1.
Diagnosis diagnose(const Checkpoint& base, const Checkpoint& ml, const Checkpoint& anchor,
                   const ModuleKeySchema& schema, double epsilon = kDefaultEpsilon,
                   ShapePolicy shape_policy = ShapePolicy::strict, std::size_t workers = 1);

inline constexpr const char* kHeatmapCsvHeader = "layer,module,norm_ml,norm_mm,dirdev_ml,dirdev_mm,cross_cos";

/// Fixed header plus one line per row, 9 significant digits; absent
/// direction statistics are written as empty fields.
void export_csv(const std::vector<HeatmapRow>& rows, const std::filesystem::path& path);

/// Array of objects keyed like the CSV header; absent statistics are null.
void export_json(const std::vector<HeatmapRow>& rows, const std::filesystem::path& path);

std::vector<HeatmapRow> load_heatmap_json(const std::filesystem::path& path);

}  // namespace dimerge

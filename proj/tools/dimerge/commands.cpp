#include "commands.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>

#include <spdlog/spdlog.h>

#include "dimerge/diagnostics.hpp"
#include "dimerge/error.hpp"
#include "dimerge/merge.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dimerge::cli {
namespace {

int exit_code_for(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::config: return kExitConfig;
        case ErrorCategory::io: return kExitIo;
        case ErrorCategory::shape:
        case ErrorCategory::numeric: return kExitNumeric;
    }
    return kExitFailure;
}

int report_error(std::ostream& err, const std::string& error_class, const std::string& message, int code) {
    err << json{{"error", error_class}, {"message", message}}.dump() << '\n';
    return code;
}

/// Runs `body`, translating library errors into the documented exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        return report_error(err, e.error_class(), e.what(), exit_code_for(e.category()));
    } catch (const fs::filesystem_error& e) {
        return report_error(err, "io.filesystem", e.what(), kExitIo);
    } catch (const std::exception& e) {
        return report_error(err, "internal", e.what(), kExitFailure);
    }
}

RunConfig resolve(const CommandOptions& opts) {
    json doc = read_config_file(opts.config_path);
    for (const auto& s : opts.set) apply_override(doc, s);
    if (opts.threads) apply_override(doc, "threads=" + std::to_string(*opts.threads));
    if (opts.output) doc["output_path"] = opts.output->string();
    return parse_run_config(doc);
}

void require_input(const fs::path& p, const char* key) {
    if (p.empty()) throw_error(ErrorCategory::config, "config.missing_path", std::string(key) + " is not set");
    if (!fs::exists(p)) {
        throw_error(ErrorCategory::config, "config.missing_path",
                    std::string(key) + " '" + p.string() + "' does not exist");
    }
}

void require_inputs(const RunConfig& rc) {
    require_input(rc.base_path, "base_path");
    require_input(rc.multilingual_path, "multilingual_path");
    require_input(rc.anchor_path, "anchor_path");
}

bool same_path(const fs::path& a, const fs::path& b) {
    return fs::weakly_canonical(a) == fs::weakly_canonical(b);
}

struct Inputs {
    Checkpoint base, ml, anchor;
};

Inputs load_inputs(const RunConfig& rc) {
    spdlog::info("loading base '{}'", rc.base_path.string());
    Inputs in{remap_keys(load_checkpoint(rc.base_path, Role::base), rc.remap_base),
              remap_keys(load_checkpoint(rc.multilingual_path, Role::multilingual), rc.remap_multilingual),
              remap_keys(load_checkpoint(rc.anchor_path, Role::anchor), rc.remap_anchor)};
    spdlog::info("loaded {} / {} / {} tensors", in.base.size(), in.ml.size(), in.anchor.size());
    return in;
}

fs::path temp_sibling(const fs::path& target) {
    const fs::path parent = target.has_parent_path() ? target.parent_path() : fs::path(".");
    return parent / (".tmp-" + std::to_string(::getpid()) + "-" + target.filename().string());
}

/// Write to a temporary sibling with `write`, then move it over `target`.
template <class F>
void write_atomically(const fs::path& target, F&& write) {
    const fs::path tmp = temp_sibling(target);
    fs::remove_all(tmp);
    try {
        write(tmp);
        if (fs::exists(target)) fs::remove_all(target);
        fs::rename(tmp, target);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text << '\n';
    if (!out) throw_error(ErrorCategory::io, "io.write_failed", "cannot write '" + path.string() + "'");
}

}  // namespace

int run_merge(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig rc = resolve(opts);
        require_inputs(rc);
        if (rc.output_path.empty()) throw_error(ErrorCategory::config, "config.missing_path", "output_path is not set");
        const fs::path report_path = rc.effective_report_path();
        for (const auto* p : {&rc.base_path, &rc.multilingual_path, &rc.anchor_path}) {
            if (same_path(*p, rc.output_path) || same_path(*p, report_path)) {
                throw_error(ErrorCategory::config, "config.invalid_value",
                            "output path '" + rc.output_path.string() + "' collides with input '" + p->string() + "'");
            }
        }

        const auto in = load_inputs(rc);
        const std::size_t workers = rc.worker_count();
        spdlog::info("merging with method {} on {} worker(s)", method_name(rc.merge.method), workers);
        const auto result = merge_checkpoint(in.base, in.ml, in.anchor, rc.merge, workers);

        write_atomically(rc.output_path,
                         [&](const fs::path& tmp) { save_checkpoint(result.merged, tmp, rc.shard_limit_bytes); });
        try {
            write_atomically(report_path, [&](const fs::path& tmp) {
                write_text(tmp, result.report.to_json(rc.to_json().dump()));
            });
        } catch (...) {
            std::error_code ec;
            fs::remove_all(rc.output_path, ec);
            throw;
        }

        const auto& r = result.report;
        char omega[32] = "n/a";
        if (r.mean_omega_ml) std::snprintf(omega, sizeof omega, "%.6f", *r.mean_omega_ml);
        out << "merged " << r.merged_count << " tensor(s), passed through " << r.passthrough_count
            << ", method " << r.method << ", mean omega_ml " << omega << " -> " << rc.output_path.string() << '\n';
        return static_cast<int>(kExitOk);
    });
}

int run_diagnose(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig rc = resolve(opts);
        if (opts.output) rc.diagnose.csv_path = *opts.output;
        require_inputs(rc);
        if (!rc.diagnose.csv_path && !rc.diagnose.json_path) {
            throw_error(ErrorCategory::config, "config.missing_path",
                        "diagnose needs diagnose.csv_path, diagnose.json_path or --output");
        }
        const auto in = load_inputs(rc);
        const auto diagnosis = diagnose(in.base, in.ml, in.anchor, rc.diagnose.schema(), rc.merge.epsilon,
                                        rc.merge.shape_policy, rc.worker_count());
        for (const auto& w : diagnosis.warnings) {
            spdlog::warn("{}", w);
            err << "warning: " << w << '\n';
        }
        if (rc.diagnose.csv_path) export_csv(diagnosis.rows, *rc.diagnose.csv_path);
        if (rc.diagnose.json_path) export_json(diagnosis.rows, *rc.diagnose.json_path);
        out << "diagnosed " << diagnosis.rows.size() << " (layer, module) group(s)\n";
        return static_cast<int>(kExitOk);
    });
}

int run_inspect(const fs::path& checkpoint, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto ckpt = load_checkpoint(checkpoint, Role::base);
        for (const auto& [name, rec] : ckpt.tensors) {
            out << name << '\t' << dtype_name(rec.dtype()) << '\t' << shape_to_string(rec.shape()) << '\n';
        }
        out << "tensors: " << ckpt.size() << '\n' << "parameters: " << ckpt.parameter_count() << '\n';
        return static_cast<int>(kExitOk);
    });
}

}  // namespace dimerge::cli

#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cupi/eval.hpp"
#include "cupi/training.hpp"

namespace cupi {

inline constexpr const char* kCodeVersion = "0.1.0";

struct RunManifest {
    std::string config_hash;
    std::string code_version = kCodeVersion;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> artifacts;
};

std::string iso8601_now();

// One row per training step:
// epoch,step,alpha,L_s,L_i,L_t,L_cls,L_Stl,L_Dis,total
std::string write_metrics_csv(const std::vector<StepRecord>& steps, const std::string& out_dir);

std::string write_summary_json(const nlohmann::json& summary, const std::string& out_dir);

// Grid CSV in the paper's layout: one accuracy row for the reference model,
// one for the method, then the drop rows.
std::string write_drop_report_csv(const DropReport& report, const std::string& out_dir);

std::string write_manifest(const RunManifest& manifest, const std::string& out_dir);

nlohmann::json drop_report_to_json(const DropReport& report);

struct ExportPaths {
    std::string metrics_csv;
    std::string summary_json;
    std::string manifest_json;
};

// Writes the per-step CSV, the summary record and the manifest; the manifest
// lists everything written here plus any artifacts the caller registered.
ExportPaths export_metrics(const std::vector<StepRecord>& steps, const nlohmann::json& summary,
                           const std::string& out_dir, RunManifest manifest);

}  // namespace cupi

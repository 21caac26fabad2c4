// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

namespace maye {

struct ReportResult {
    std::filesystem::path aggregate_csv;
    std::filesystem::path tabs_csv;
    std::vector<std::filesystem::path> svg_files;
    int runs = 0;
};

/// seed_<n> subdirectories of `root` whose MANIFEST.json reports a complete
/// run, ordered by seed. Throws ConfigError when root does not exist.
std::vector<std::filesystem::path> discover_run_dirs(const std::filesystem::path& root);

///// Cross-run aggregation: refuses mismatched configs (everything except the
/// seed must agree, reported as a key-path diff), then writes aggregate.csv
/// (metric, x, mean, std), tabs.csv (mean/max accuracy tabs) and one
/// self-contained SVG learning curve per metric into out_dir.
ReportResult write_report(const std::vector<std::filesystem::path>& run_dirs,
                          const std::filesystem::path& out_dir);

}  // namespace maye

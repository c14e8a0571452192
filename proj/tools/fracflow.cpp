// fracflow <kind> --config FILE [--set key=value ...] --out DIR
// fracflow verify-goldens --dir DIR

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "fracflow/harness.hpp"

namespace h = fracflow::harness;

int main(int argc, char** argv)
{
    CLI::App app{"fractional Allen-Cahn / nonlocal curvature flow laboratory"};
    app.require_subcommand(1);

    struct Opts {
        std::string config, out;
        std::vector<std::string> sets;
    };
    std::map<std::string, Opts> opts;
    for (const auto& kind : h::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
        auto& o = opts[kind];
        sub->add_option("--config", o.config, "config file (INI sections)")->check(CLI::ExistingFile);
        sub->add_option("--set", o.sets, "override, section.key=value (repeatable)");
        sub->add_option("--out", o.out, "output directory");
    }
    std::string golden_dir;
    auto* verify = app.add_subcommand("verify-goldens", "recompute cheap quantities and diff against goldens");
    verify->add_option("--dir", golden_dir, "golden directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) {
            const auto checks = h::verify_goldens(golden_dir);
            int failed = 0;
            for (const auto& c : checks) {
                std::printf("%-6s %-16s %-18s value=%s golden=%s tol=%g\n", c.status.c_str(), c.file.c_str(),
                            c.name.c_str(), h::fmt17(c.value).c_str(), h::fmt17(c.golden).c_str(), c.tol);
                failed += c.status == "fail";
            }
            return failed ? 1 : 0;
        }
        for (const auto& kind : h::experiment_kinds()) {
            if (!app.got_subcommand(kind)) continue;
            const auto& o = opts[kind];
            auto cfg = h::Config::defaults();
            if (!o.config.empty()) cfg.merge_text(h::read_file(o.config), o.config);
            for (const auto& s : o.sets) cfg.set(s);
            cfg.values["run.kind"] = kind;
            if (!o.out.empty()) cfg.values["output.dir"] = o.out;
            const auto rc = h::resolve(cfg);
            const auto m = h::run(rc);
            std::printf("%s: %zu files in %s (%.1f s)\n", kind.c_str(), m["files"].size(), rc.out_dir.c_str(),
                        m["wall_time_s"].get<double>());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}

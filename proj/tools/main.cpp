#include <cstdint>
#include <string>

#include "CLI11.hpp"

#include "fltrust/cli.hpp"

int main(int argc, char** argv) {
    using namespace fltrust::cli;

    CLI::App app{"Deterministic federated-learning simulator with trust-weighted aggregation"};
    app.require_subcommand(1);

    RunOptions run_opt;
    std::uint64_t run_seed = 0;
    CLI::App* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("--config", run_opt.config_path, "JSON config (or a summary.json manifest)")
        ->required();
    run->add_option("--out", run_opt.out_dir, "Output directory")->required();
    run->add_option("--override", run_opt.overrides,
                    "key=value config override (repeatable; dotted paths reach nested keys)");
    CLI::Option* run_seed_opt = run->add_option("--seed", run_seed, "Master seed override");

    SweepOptions sweep_opt;
    std::uint64_t sweep_seed = 0;
    CLI::App* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
    sweep->add_option("--config", sweep_opt.config_path, "JSON config (or a summary.json manifest)")
        ->required();
    sweep->add_option("--out", sweep_opt.out_dir, "Output directory")->required();
    sweep->add_option("--axis", sweep_opt.axis,
                      "malicious_fraction | root_size | bias_probability | q")
        ->required();
    sweep->add_option("--values", sweep_opt.values, "Axis values, one sub-run each")->required();
    sweep->add_option("--override", sweep_opt.overrides,
                      "key=value config override (repeatable)");
    CLI::Option* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "Master seed override");

    std::uint64_t verify_seed = 1;
    CLI::App* verify = app.add_subcommand("verify", "Run every verification suite");
    verify->add_option("--seed", verify_seed, "Suite seed");

    CLI::App* gen = app.add_subcommand("gen-data", "Generate or convert datasets");
    gen->require_subcommand(1);

    GenSyntheticOptions syn_opt;
    CLI::App* syn = gen->add_subcommand("synthetic", "Write a synthetic CSV dataset");
    syn->add_option("--out", syn_opt.out, "Output CSV path")->required();
    syn->add_option("--classes", syn_opt.classes, "Number of classes");
    syn->add_option("--input-dim", syn_opt.input_dim, "Feature dimension");
    syn->add_option("--per-class", syn_opt.per_class, "Examples per class");
    syn->add_option("--spread", syn_opt.spread, "Within-class standard deviation");
    syn->add_option("--seed", syn_opt.seed, "Generator seed");

    GenIdxConvertOptions idx_opt;
    CLI::App* idx = gen->add_subcommand("idx-convert", "Convert an IDX image/label pair to CSV");
    idx->add_option("--images", idx_opt.images, "IDX image file")->required();
    idx->add_option("--labels", idx_opt.labels, "IDX label file")->required();
    idx->add_option("--out", idx_opt.out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (run->parsed()) {
        if (run_seed_opt->count() > 0) run_opt.seed = run_seed;
        return cmd_run(run_opt);
    }
    if (sweep->parsed()) {
        if (sweep_seed_opt->count() > 0) sweep_opt.seed = sweep_seed;
        return cmd_sweep(sweep_opt);
    }
    if (verify->parsed()) return cmd_verify(verify_seed);
    if (gen->parsed()) {
        if (syn->parsed()) return cmd_gen_synthetic(syn_opt);
        return cmd_gen_idx_convert(idx_opt);
    }
    return kExitConfig;
}

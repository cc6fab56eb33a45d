#pragma once

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "gace/baselines.hpp"
#include "gace/ctr.hpp"
#include "gace/trainer.hpp"

namespace gace::cli {

// Fixed file names inside a synthetic dataset directory.
constexpr const char* kItemsFile = "items.tsv";
constexpr const char* kUsersFile = "users.tsv";
constexpr const char* kTrainImpressionsFile = "impressions_train.txt";
constexpr const char* kTestImpressionsFile = "impressions_test.txt";
constexpr const char* kHeldoutFile = "heldout.txt";

namespace detail {

inline std::string join(const std::string& dir, const char* name) {
    return (std::filesystem::path(dir) / name).string();
}

inline SyntheticDataset load_dataset_dir(const std::string& dir) {
    SyntheticDataset ds;
    ds.items = load_items(join(dir, kItemsFile));
    const auto users_path = join(dir, kUsersFile);
    ds.users = parse_users(read_file(users_path), "users file '" + users_path + "'");
    const auto train_path = join(dir, kTrainImpressionsFile);
    ds.train_impressions = parse_impressions(read_file(train_path), "impressions file '" + train_path + "'");
    const auto test_path = join(dir, kTestImpressionsFile);
    ds.test_impressions = parse_impressions(read_file(test_path), "impressions file '" + test_path + "'");
    ds.heldout = parse_heldout(read_file(join(dir, kHeldoutFile)));
    auto check = [&](const std::vector<Impression>& imps, const std::string& path) {
        for (const auto& imp : imps)
            if (imp.item >= ds.items.size() || imp.user >= ds.users.rows)
                throw Error("impressions file '" + path + "': index out of range (user " +
                            std::to_string(imp.user) + ", ad " + std::to_string(imp.item) + ")");
    };
    check(ds.train_impressions, train_path);
    check(ds.test_impressions, test_path);
    return ds;
}

}  // namespace detail

inline int run(std::vector<std::string> args) {
    CLI::App app{"Cross-page ad embedding pipeline: builds a weighted ad graph from item\n"
                 "knowledge, pre-trains a variational graph auto-encoder over it, and\n"
                 "evaluates the embeddings on a synthetic click-through task.",
                 "gace"};
    app.require_subcommand(1);

    // ---- synth ----
    SyntheticConfig synth_cfg;
    std::string synth_out_dir;
    auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset directory");
    synth->add_option("--out-dir", synth_out_dir, "Directory for the dataset files")->required();
    synth->add_option("--n-items", synth_cfg.n_items, "Number of ads")->capture_default_str();
    synth->add_option("--n-users", synth_cfg.n_users, "Number of users")->capture_default_str();
    synth->add_option("--n-pages", synth_cfg.n_pages, "Number of pages")->capture_default_str();
    synth->add_option("--n-clusters", synth_cfg.n_clusters, "Number of planted clusters")->capture_default_str();
    synth->add_option("--n-impressions", synth_cfg.n_impressions, "Training impressions")->capture_default_str();
    synth->add_option("--cold-fraction", synth_cfg.cold_fraction, "Fraction of items held out as cold")
        ->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "Generator seed")->capture_default_str();
    synth->add_option("--sem-dim", synth_cfg.sem_dim, "Semantic vector width")->capture_default_str();
    synth->add_option("--user-dim", synth_cfg.user_dim, "User vector width")->capture_default_str();
    synth->add_option("--test-fraction", synth_cfg.test_fraction,
                      "Test impressions as a fraction of training ones")
        ->capture_default_str();
    synth->callback([&]() {
        const auto ds = gen_synthetic(synth_cfg);
        std::filesystem::create_directories(synth_out_dir);
        save_items(detail::join(synth_out_dir, kItemsFile), ds.items);
        write_atomic(detail::join(synth_out_dir, kUsersFile), serialize_users(ds.users));
        write_atomic(detail::join(synth_out_dir, kTrainImpressionsFile),
                     serialize_impressions(ds.train_impressions));
        write_atomic(detail::join(synth_out_dir, kTestImpressionsFile),
                     serialize_impressions(ds.test_impressions));
        write_atomic(detail::join(synth_out_dir, kHeldoutFile), serialize_heldout(ds.heldout));
    });

    // ---- ingest ----
    std::string ingest_items, ingest_out;
    std::size_t ingest_dim = 0;
    auto* ingest = app.add_subcommand("ingest", "Validate an items file and rewrite it canonically");
    ingest->add_option("--items", ingest_items, "Input items file")->required();
    ingest->add_option("--out", ingest_out, "Canonicalized output file")->required();
    ingest->add_option("--dim", ingest_dim, "Required semantic width (0 = infer)")->capture_default_str();
    ingest->callback([&]() {
        const auto items = load_items(ingest_items, ingest_dim);
        if (items.empty()) throw Error("items file '" + ingest_items + "' has no records");
        build_page_profiles(items);  // surfaces pages with no history
        save_items(ingest_out, items);
    });

    // ---- build-graph ----
    std::string bg_items, bg_out;
    GraphConfig bg_cfg;
    auto* bg = app.add_subcommand("build-graph", "Build the weighted ad graph from an items file");
    bg->add_option("--items", bg_items, "Input items file")->required();
    bg->add_option("--out", bg_out, "Output graph file")->required();
    bg->add_option("--top-k", bg_cfg.top_k, "Neighbors kept per node")->capture_default_str();
    bg->add_option("--min-weight", bg_cfg.min_weight, "Drop edges lighter than this")->capture_default_str();
    bg->callback([&]() {
        const auto items = load_items(bg_items);
        if (items.empty()) throw Error("items file '" + bg_items + "' has no records");
        const auto profiles = build_page_profiles(items);
        const auto graph = build_graph(assemble_node_features(items, profiles), bg_cfg);
        save_graph(bg_out, graph);
    });

    // ---- pretrain ----
    std::string pt_graph, pt_out, pt_history;
    TrainConfig pt_cfg;
    auto* pt = app.add_subcommand("pretrain", "Train the auto-encoder on a graph file");
    pt->add_option("--graph", pt_graph, "Input graph file")->required();
    pt->add_option("--out", pt_out, "Output parameter checkpoint")->required();
    pt->add_option("--history", pt_history, "Optional per-epoch loss CSV");
    pt->add_option("--epochs", pt_cfg.epochs, "Full-batch steps")->capture_default_str();
    pt->add_option("--lr", pt_cfg.lr, "Learning rate")->capture_default_str();
    pt->add_option("--optimizer", pt_cfg.optimizer, "Optimizer")
        ->check(CLI::IsMember({"gd", "adamw"}))
        ->capture_default_str();
    pt->add_option("--kl-weight", pt_cfg.kl_weight, "Weight of the prior term")->capture_default_str();
    pt->add_option("--seed", pt_cfg.seed, "Init and noise seed")->capture_default_str();
    pt->add_option("--eps", pt_cfg.eps, "Reconstruction smoothing")->capture_default_str();
    pt->add_option("--hidden-dim", pt_cfg.hidden_dim, "Hidden layer width")->capture_default_str();
    pt->add_option("--dim", pt_cfg.embed_dim, "Embedding width")->capture_default_str();
    pt->add_option("--negative-slope", pt_cfg.negative_slope, "LeakyReLU slope")->capture_default_str();
    pt->add_option("--weight-decay", pt_cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
    pt->add_flag("--flip-prior-sign", pt_cfg.flip_prior_sign,
                 "Subtract the prior term instead of adding it");
    pt->callback([&]() {
        const auto graph = load_graph(pt_graph);
        const auto report = train(graph, pt_cfg);
        save_encoder(pt_out, report.params);
        if (!pt_history.empty()) save_history(pt_history, report.history);
    });

    // ---- embed ----
    std::string em_graph, em_ckpt, em_out;
    bool em_sample = false;
    uint64_t em_seed = 0;
    auto* em = app.add_subcommand("embed", "Write the embedding table for a graph and checkpoint");
    em->add_option("--graph", em_graph, "Input graph file")->required();
    em->add_option("--checkpoint", em_ckpt, "Trained parameter checkpoint")->required();
    em->add_option("--out", em_out, "Output embedding table")->required();
    em->add_flag("--sample", em_sample, "Export a posterior sample instead of the mean");
    em->add_option("--seed", em_seed, "Sampling seed (with --sample)")->capture_default_str();
    em->callback([&]() {
        const auto graph = load_graph(em_graph);
        const auto params = load_encoder(em_ckpt);
        const auto latent = encode(graph, params);
        EmbeddingTable table;
        table.ordering = graph.features.ordering;
        table.source = "gace";
        table.vectors = em_sample ? reparameterize(latent, em_seed) : latent.mu;
        save_table(em_out, table);
    });

    // ---- baseline ----
    std::string bl_graph, bl_model, bl_out;
    std::size_t bl_dim = 15;
    uint64_t bl_seed = 0;
    auto* bl = app.add_subcommand("baseline", "Write a reference embedding table");
    bl->add_option("--graph", bl_graph, "Input graph file")->required();
    bl->add_option("--model", bl_model, "Baseline to generate")
        ->check(CLI::IsMember({"rnd", "ngb"}))
        ->required();
    bl->add_option("--out", bl_out, "Output embedding table")->required();
    bl->add_option("--dim", bl_dim, "Embedding width")->capture_default_str();
    bl->add_option("--seed", bl_seed, "Seed (rnd model)")->capture_default_str();
    bl->callback([&]() {
        const auto graph = load_graph(bl_graph);
        const auto table = bl_model == "rnd" ? rnd_emb(graph.features.ordering, bl_dim, bl_seed)
                                             : ngb_emb(graph, bl_dim);
        save_table(bl_out, table);
    });

    // ---- eval ----
    std::string ev_dir, ev_table, ev_model = "gace", ev_out, ev_scope = "both";
    CtrTrainConfig ev_cfg;
    auto* ev = app.add_subcommand("eval", "Score an embedding table on a synthetic dataset");
    ev->add_option("--data-dir", ev_dir, "Dataset directory written by synth")->required();
    ev->add_option("--embeddings", ev_table, "Embedding table to evaluate")->required();
    ev->add_option("--model", ev_model, "Model tag recorded in the report")->capture_default_str();
    ev->add_option("--out", ev_out, "Output metrics CSV")->required();
    ev->add_option("--scope", ev_scope, "Impression scope")
        ->check(CLI::IsMember({"all", "cold_only", "both"}))
        ->capture_default_str();
    ev->add_option("--epochs", ev_cfg.epochs, "Click-head training steps")->capture_default_str();
    ev->add_option("--lr", ev_cfg.lr, "Click-head learning rate")->capture_default_str();
    ev->add_option("--seed", ev_cfg.seed, "Seed recorded in the report")->capture_default_str();
    ev->callback([&]() {
        const auto ds = detail::load_dataset_dir(ev_dir);
        const auto table = load_table(ev_table, ev_model);
        const auto head = train_ctr_head(ds, table, ev_cfg);
        std::vector<MetricsRow> rows;
        for (const char* scope : {"all", "cold_only"}) {
            if (ev_scope != "both" && ev_scope != scope) continue;
            const auto res = evaluate(ds, table, head, scope);
            rows.push_back({ev_model, scope, res.auc, res.loss, ev_cfg.seed});
        }
        save_metrics(ev_out, rows);
    });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        CLI::App* target = &app;
        for (auto parsed = target->get_subcommands(); !parsed.empty(); parsed = target->get_subcommands())
            target = parsed.front();
        std::cout << target->help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

inline int run(int argc, char** argv) {
    return run(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace gace::cli

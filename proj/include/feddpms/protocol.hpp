#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "feddpms/costs.hpp"
#include "feddpms/data.hpp"
#include "feddpms/privacy.hpp"
#include "feddpms/rng.hpp"
#include "feddpms/vae.hpp"

namespace feddpms {

enum class Scheme { feddpms, fedavg, fedprox };

inline std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::feddpms: return "feddpms";
        case Scheme::fedavg: return "fedavg";
        case Scheme::fedprox: return "fedprox";
    }
    return "?";
}

struct ProtocolConfig {
    std::size_t K = 10;
    std::size_t k = 10;
    std::size_t T = 50;
    std::size_t T_p = 20;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 64;
    double lambda = 0.05;
    std::size_t n = 3;
    std::size_t alpha = 100;
    double noise_std = 0.05;
    double mu_prox = 0.001;
    std::size_t max_attempts = 50;  // per accepted record
    double lr = 1e-3;
    std::size_t lr_decay_period = 10;  // in rounds
    double lr_decay_gamma = 0.5;
    std::uint64_t master_seed = 1;
    bool stub_training = false;  // protocol-only mode: one optimizer step per round
};

// One accepted noisy latent mean; passed the decode-classify filter at creation.
struct LatentMeanRecord {
    int origin = -1;
    int label = -1;
    Tensor z;
    std::size_t attempt = 0;
};

struct ClientState {
    int id = -1;
    Dataset local;      // D_i, immutable after partition
    Dataset augmented;  // D̄_i, = D_i until synthesis
    VaeModel model;
    bool has_downloaded_decoder = false;
    bool dpms_done = false;  // attempted DPMS (success or partial); never re-runs
    // audit counters
    std::size_t dpms_count = 0;
    std::size_t synthesis_count = 0;
};

struct ServerState {
    VaeArch arch;
    ModelParams enc, clf;
    std::optional<ModelParams> decoder;  // w_d, immutable once set
    std::set<int> shared;                // A
    std::set<int> benefited;             // B
    std::map<int, std::vector<int>> abundance;              // C
    std::map<int, std::vector<LatentMeanRecord>> latent_bank;  // Z
    std::size_t round = 0;
};

struct RoundWarning {
    int client = -1;
    int class_label = -1;
    std::size_t accepted = 0;
    std::size_t quota = 0;
};

struct RoundRecord {
    std::size_t round = 0;
    std::string scheme;
    double accuracy = 0.0;
    std::vector<std::pair<int, double>> client_losses;  // (client id, mean train loss)
    std::size_t shared_count = 0;
    std::size_t benefited_count = 0;
    std::size_t scalars_up = 0;
    std::size_t scalars_down = 0;
    std::vector<RoundWarning> warnings;
};

// ---- selection & aggregation ----

inline std::vector<int> select_clients(std::size_t K, std::size_t k, std::mt19937_64& rng) {
    if (k > K) throw std::invalid_argument("select_clients: k > K");
    std::vector<int> all(K);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(k);
    std::sort(all.begin(), all.end());  // ascending id order for reproducible application
    return all;
}

inline ModelParams aggregate(const std::vector<const ModelParams*>& parts,
                             const std::vector<double>& sizes) {
    double total = 0.0;
    for (double s : sizes) total += s;
    if (total <= 0.0) throw std::invalid_argument("aggregate: empty weights");
    std::vector<double> w;
    for (double s : sizes) w.push_back(s / total);
    return weighted_sum(parts, w);
}

// ---- matching (server side) ----

// R_i = argmax_{j in A, j != i} |H_i ∩ C_j|, ties to the lowest client id.
// Empty C means no matching at all. A zero-overlap argmax still matches
// (the algorithm is unconditional); callers may log it.
inline std::map<int, int> matching(const std::vector<int>& requesting,
                                   const std::set<int>& shared,
                                   const std::map<int, std::vector<int>>& abundance,
                                   const std::map<int, std::vector<int>>& scarce) {
    std::map<int, int> result;
    if (abundance.empty()) return result;
    for (int i : requesting) {
        auto h_it = scarce.find(i);
        if (h_it == scarce.end())
            throw std::invalid_argument("matching: missing scarce profile for client " + std::to_string(i));
        const std::set<int> h(h_it->second.begin(), h_it->second.end());
        int best = -1;
        std::size_t best_overlap = 0;
        for (int j : shared) {
            if (j == i) continue;
            auto c_it = abundance.find(j);
            if (c_it == abundance.end()) continue;
            std::size_t overlap = 0;
            for (int c : c_it->second) overlap += h.count(c);
            if (best < 0 || overlap > best_overlap) {
                best = j;
                best_overlap = overlap;
            }
        }
        if (best >= 0) result[i] = best;
    }
    return result;
}

// ---- DPMS (client side) ----

struct DpmsResult {
    std::vector<int> abundant;                 // C_i
    std::vector<LatentMeanRecord> records;     // Z_i, n*alpha on full success
    std::vector<RoundWarning> partial;         // nonempty when some class missed quota
    bool complete = true;
};

// Per abundant class: z̄ = mean of encoder mu over the client's *real* samples
// of that class, then repeatedly perturb / decode / classify until alpha
// accepted or the attempt budget runs out.
inline DpmsResult dpms(const ClientState& client, const ModelParams& global_decoder,
                       std::size_t n, std::size_t alpha, double noise_std,
                       std::size_t max_attempts, std::mt19937_64& rng) {
    const VaeArch& arch = client.model.arch;
    DpmsResult out;
    ClassProfile profile = class_profile(client.local, n);
    out.abundant = profile.abundant;

    for (int c : profile.abundant) {
        // real-only class mean of latent mu
        Tensor zbar = Tensor::vector(arch.latent_dim);
        std::size_t m = 0;
        for (const auto& s : client.local.samples) {
            if (s.synthetic || s.label != c) continue;
            Tensor mu = encode_mu(arch, client.model.enc, s.features);
            for (std::size_t j = 0; j < arch.latent_dim; ++j) zbar[j] += mu[j];
            ++m;
        }
        if (m == 0) {
            out.partial.push_back({client.id, c, 0, alpha});
            out.complete = false;
            continue;
        }
        for (auto& v : zbar.data) v /= double(m);

        std::size_t accepted = 0, attempts = 0;
        const std::size_t class_start = out.records.size();
        const std::size_t budget = max_attempts * alpha;
        while (accepted < alpha && attempts < budget) {
            ++attempts;
            Tensor zt = perturb_mean(zbar, noise_std, rng);
            Tensor xt = decode(arch, global_decoder, zt);
            const int yt = predict(arch, client.model.enc, client.model.clf, xt);
            if (yt == c) {
                out.records.push_back({client.id, c, std::move(zt), attempts});
                ++accepted;
            }
        }
        if (accepted < alpha) {
            // roll back this class's partial records so Z_i stays all-or-nothing
            out.records.resize(class_start);
            out.partial.push_back({client.id, c, accepted, alpha});
            out.complete = false;
        }
    }
    return out;
}

inline Dataset synthesize(const VaeArch& arch, const ModelParams& global_decoder,
                          const std::vector<LatentMeanRecord>& bank, std::size_t class_count) {
    if (bank.empty()) throw std::invalid_argument("synthesize: empty latent bank");
    Dataset d;
    d.class_count = class_count;
    for (const auto& rec : bank) {
        Sample s;
        s.features = decode(arch, global_decoder, rec.z);
        s.label = rec.label;
        s.synthetic = true;
        d.samples.push_back(std::move(s));
    }
    return d;
}

// ---- local training ----

namespace detail {

inline double round_lr(const ProtocolConfig& cfg, std::size_t round) {
    return cfg.lr * std::pow(cfg.lr_decay_gamma, double(round / cfg.lr_decay_period));
}

// E epochs of minibatch Adam on the given sample view. Returns the mean batch
// loss. `preliminary` selects the composite VAE loss; otherwise CE only.
// `prox_anchor` (when set) adds mu_prox*(w - anchor) to encoder/classifier grads.
inline double local_train(VaeModel& model, const std::vector<const Sample*>& view,
                          const ProtocolConfig& cfg, std::size_t round, bool preliminary,
                          const VaeModel* prox_anchor, std::mt19937_64& rng) {
    if (view.empty()) return 0.0;
    const double lr = round_lr(cfg, round);
    OptimState oe = OptimState::for_params(model.enc, lr, std::size_t(-1));
    OptimState oc = OptimState::for_params(model.clf, lr, std::size_t(-1));
    OptimState od = OptimState::for_params(model.dec, lr, std::size_t(-1));

    std::vector<std::size_t> order(view.size());
    std::iota(order.begin(), order.end(), 0);

    const std::size_t epochs = cfg.stub_training ? 1 : cfg.local_epochs;
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), pos + cfg.batch_size);
            std::vector<BatchExample> batch;
            for (std::size_t i = pos; i < end; ++i)
                batch.push_back({&view[order[i]]->features, view[order[i]]->label});
            auto eps = draw_eps(batch.size(), model.arch.latent_dim, rng);
            VaeGrads g = zero_grads(model);
            double loss = preliminary ? preliminary_loss(model, batch, cfg.lambda, eps, &g)
                                      : secondary_loss(model, batch, eps, &g);
            if (prox_anchor) {
                auto add_prox = [&](ModelParams& grad, const ModelParams& w, const ModelParams& anchor) {
                    for (std::size_t l = 0; l < grad.layers.size(); ++l) {
                        for (std::size_t j = 0; j < grad.layers[l].weight.size(); ++j)
                            grad.layers[l].weight[j] +=
                                cfg.mu_prox * (w.layers[l].weight[j] - anchor.layers[l].weight[j]);
                        for (std::size_t j = 0; j < grad.layers[l].bias.size(); ++j)
                            grad.layers[l].bias[j] +=
                                cfg.mu_prox * (w.layers[l].bias[j] - anchor.layers[l].bias[j]);
                    }
                };
                add_prox(g.enc, model.enc, prox_anchor->enc);
                add_prox(g.clf, model.clf, prox_anchor->clf);
            }
            adam_step(model.enc, g.enc, oe);
            adam_step(model.clf, g.clf, oc);
            if (preliminary) adam_step(model.dec, g.dec, od);
            loss_sum += loss;
            ++steps;
            if (cfg.stub_training) return loss;
        }
    }
    return steps ? loss_sum / double(steps) : 0.0;
}

inline std::vector<const Sample*> full_view(const Dataset& d) {
    std::vector<const Sample*> v;
    v.reserve(d.size());
    for (const auto& s : d.samples) v.push_back(&s);
    return v;
}

}  // namespace detail

// ---- evaluation ----

inline double evaluate(const VaeArch& arch, const ModelParams& enc, const ModelParams& clf,
                       const Dataset& test) {
    if (test.samples.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::size_t correct = 0;
    for (const auto& s : test.samples)
        correct += (predict(arch, enc, clf, s.features) == s.label) ? 1 : 0;
    return double(correct) / double(test.size());
}

// ---- rounds ----

// Preliminary round (Algorithm 1, lines 3-11): selected clients pull the
// global encoder+classifier (never the decoder), train the full VAE loss, and
// upload; the final preliminary round also uploads decoders so the server can
// build the immutable global decoder.
inline RoundRecord pretrain_round(ServerState& server, std::vector<ClientState>& clients,
                                  const ProtocolConfig& cfg, std::size_t round,
                                  const std::vector<int>& selected, TrafficCounters& traffic) {
    RoundRecord rec;
    rec.round = round;
    rec.scheme = "feddpms";
    const bool last = (round + 1 == cfg.T_p);
    const std::size_t model_scalars = server.enc.scalar_count() + server.clf.scalar_count();

    std::vector<const ModelParams*> encs, clfs, decs;
    std::vector<double> sizes;
    for (int id : selected) {
        ClientState& cl = clients[std::size_t(id)];
        cl.model.enc = server.enc;
        cl.model.clf = server.clf;
        traffic.model_down += model_scalars;
        auto rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::shuffle),
                               std::uint64_t(id), std::uint64_t(round));
        const double loss =
            detail::local_train(cl.model, detail::full_view(cl.local), cfg, round, true, nullptr, rng);
        rec.client_losses.emplace_back(id, loss);
        traffic.model_up += model_scalars;
        encs.push_back(&cl.model.enc);
        clfs.push_back(&cl.model.clf);
        sizes.push_back(double(cl.local.size()));
        if (last) {
            decs.push_back(&cl.model.dec);
            traffic.decoder_up += cl.model.dec.scalar_count();
        }
    }
    server.enc = aggregate(encs, sizes);
    server.clf = aggregate(clfs, sizes);
    if (last) server.decoder = aggregate(decs, sizes);
    server.round = round + 1;
    rec.scalars_up = traffic.model_up + traffic.decoder_up + traffic.means_up;
    rec.scalars_down = traffic.model_down + traffic.decoder_down + traffic.means_down;
    return rec;
}

// Secondary round (Algorithm 2): matching, synthesis for matched clients,
// CE-only training on a fresh uniform subsample, DPMS for first-time sharers,
// then aggregation weighted by augmented dataset sizes.
inline RoundRecord sectrain_round(ServerState& server, std::vector<ClientState>& clients,
                                  const ProtocolConfig& cfg, std::size_t round,
                                  const std::vector<int>& selected, TrafficCounters& traffic) {
    if (!server.decoder) throw std::logic_error("sectrain_round: global decoder missing");
    RoundRecord rec;
    rec.round = round;
    rec.scheme = "feddpms";
    const std::size_t model_scalars = server.enc.scalar_count() + server.clf.scalar_count();
    const std::size_t decoder_scalars = server.decoder->scalar_count();

    // (1) matching for selected clients not yet benefited
    std::vector<int> requesting;
    std::map<int, std::vector<int>> scarce;
    for (int id : selected) {
        if (server.benefited.count(id)) continue;
        requesting.push_back(id);
        scarce[id] = class_profile(clients[std::size_t(id)].local, cfg.n).scarce;
    }
    const auto matches = matching(requesting, server.shared, server.abundance, scarce);

    // (2) matched clients download the decoder (once ever) and the bank, synthesize, merge
    for (int id : requesting) {
        auto it = matches.find(id);
        if (it == matches.end()) continue;
        ClientState& cl = clients[std::size_t(id)];
        if (!cl.has_downloaded_decoder) {
            cl.has_downloaded_decoder = true;
            traffic.decoder_down += decoder_scalars;
            traffic.decoder_download_events += 1;
        }
        const auto& bank = server.latent_bank.at(it->second);
        traffic.means_down += bank.size() * server.arch.latent_dim;
        Dataset synth = synthesize(server.arch, *server.decoder, bank, cl.local.class_count);
        cl.augmented = merge_synthetic(cl.local, synth);
        cl.synthesis_count += 1;
        server.benefited.insert(id);
    }

    // (3) CE-only local training on a uniform |D_i| subsample of D̄_i
    std::vector<const ModelParams*> encs, clfs;
    std::vector<double> sizes;
    for (int id : selected) {
        ClientState& cl = clients[std::size_t(id)];
        cl.model.enc = server.enc;
        cl.model.clf = server.clf;
        traffic.model_down += model_scalars;
        auto sub_rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::subsample),
                                   std::uint64_t(id), std::uint64_t(round));
        auto view = sample_round_subset(cl.augmented, cl.local.size(), sub_rng);
        auto rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::shuffle),
                               std::uint64_t(id), std::uint64_t(round));
        const double loss = detail::local_train(cl.model, view, cfg, round, false, nullptr, rng);
        rec.client_losses.emplace_back(id, loss);
        traffic.model_up += model_scalars;
        encs.push_back(&cl.model.enc);
        clfs.push_back(&cl.model.clf);
        sizes.push_back(double(cl.augmented.size()));
    }

    // (4) DPMS for selected clients that never shared
    for (int id : selected) {
        ClientState& cl = clients[std::size_t(id)];
        if (server.shared.count(id) || cl.dpms_done) continue;
        if (!cl.has_downloaded_decoder) {
            cl.has_downloaded_decoder = true;
            traffic.decoder_down += decoder_scalars;
            traffic.decoder_download_events += 1;
        }
        auto rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::dp_noise),
                               std::uint64_t(id), std::uint64_t(round));
        DpmsResult res = dpms(cl, *server.decoder, cfg.n, cfg.alpha, cfg.noise_std,
                              cfg.max_attempts, rng);
        cl.dpms_done = true;
        cl.dpms_count += 1;
        if (res.complete) {
            traffic.means_up += res.records.size() * server.arch.latent_dim;
            server.shared.insert(id);
            server.abundance[id] = res.abundant;
            server.latent_bank[id] = std::move(res.records);
        } else {
            for (auto& w : res.partial) rec.warnings.push_back(w);
        }
    }

    // (5) aggregation weighted by |D̄_i|
    server.enc = aggregate(encs, sizes);
    server.clf = aggregate(clfs, sizes);
    server.round = round + 1;
    rec.shared_count = server.shared.size();
    rec.benefited_count = server.benefited.size();
    rec.scalars_up = traffic.model_up + traffic.decoder_up + traffic.means_up;
    rec.scalars_down = traffic.model_down + traffic.decoder_down + traffic.means_down;
    return rec;
}

// Plain CE baseline round; mu_prox > 0 adds the FedProx proximal pull toward
// the round-start global model. mu_prox == 0 is exactly FedAvg.
inline RoundRecord baseline_round(ServerState& server, std::vector<ClientState>& clients,
                                  const ProtocolConfig& cfg, std::size_t round,
                                  const std::vector<int>& selected, double mu_prox,
                                  TrafficCounters& traffic) {
    RoundRecord rec;
    rec.round = round;
    rec.scheme = mu_prox > 0.0 ? "fedprox" : "fedavg";
    const std::size_t model_scalars = server.enc.scalar_count() + server.clf.scalar_count();

    VaeModel anchor;
    anchor.arch = server.arch;
    anchor.enc = server.enc;
    anchor.clf = server.clf;

    ProtocolConfig local_cfg = cfg;
    local_cfg.mu_prox = mu_prox;

    std::vector<const ModelParams*> encs, clfs;
    std::vector<double> sizes;
    for (int id : selected) {
        ClientState& cl = clients[std::size_t(id)];
        cl.model.enc = server.enc;
        cl.model.clf = server.clf;
        traffic.model_down += model_scalars;
        auto rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::shuffle),
                               std::uint64_t(id), std::uint64_t(round));
        const double loss = detail::local_train(cl.model, detail::full_view(cl.local), local_cfg,
                                                round, false, &anchor, rng);
        rec.client_losses.emplace_back(id, loss);
        traffic.model_up += model_scalars;
        encs.push_back(&cl.model.enc);
        clfs.push_back(&cl.model.clf);
        sizes.push_back(double(cl.local.size()));
    }
    server.enc = aggregate(encs, sizes);
    server.clf = aggregate(clfs, sizes);
    server.round = round + 1;
    rec.scalars_up = traffic.model_up;
    rec.scalars_down = traffic.model_down;
    return rec;
}

// ---- full-run driver ----

struct RunResult {
    std::vector<RoundRecord> rounds;
    TrafficCounters traffic;
    ServerState server;
    std::vector<ClientState> clients;
    double final_accuracy = 0.0;
};

inline RunResult init_run(const VaeArch& arch, const std::vector<Dataset>& partitions,
                          const ProtocolConfig& cfg) {
    if (partitions.size() != cfg.K) throw std::invalid_argument("init_run: partition/K mismatch");
    RunResult run;
    run.server.arch = arch;
    auto init_rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::init));
    run.server.enc = init_encoder(arch, init_rng);
    run.server.clf = init_classifier(arch, init_rng);
    // one shared decoder starting point; rounds never re-sync it, but a common
    // init keeps the locally-trained decoders averageable at round T_p - 1
    const ModelParams dec0 = init_decoder(arch, init_rng);
    for (std::size_t i = 0; i < cfg.K; ++i) {
        ClientState cl;
        cl.id = int(i);
        cl.local = partitions[i];
        cl.augmented = partitions[i];
        cl.model.arch = arch;
        cl.model.enc = run.server.enc;
        cl.model.clf = run.server.clf;
        cl.model.dec = dec0;
        run.clients.push_back(std::move(cl));
    }
    return run;
}

inline RunResult run_scheme(Scheme scheme, const VaeArch& arch,
                            const std::vector<Dataset>& partitions, const Dataset& test,
                            const ProtocolConfig& cfg) {
    if (scheme == Scheme::feddpms && cfg.T_p > cfg.T)
        throw std::invalid_argument("run_scheme: T_p must be <= T");
    RunResult run = init_run(arch, partitions, cfg);
    for (std::size_t t = 0; t < cfg.T; ++t) {
        auto sel_rng = make_stream(cfg.master_seed, std::uint64_t(StreamKind::selection),
                                   std::uint64_t(t));
        const auto selected = select_clients(cfg.K, cfg.k, sel_rng);
        RoundRecord rec;
        if (scheme == Scheme::feddpms) {
            rec = (t < cfg.T_p)
                      ? pretrain_round(run.server, run.clients, cfg, t, selected, run.traffic)
                      : sectrain_round(run.server, run.clients, cfg, t, selected, run.traffic);
        } else {
            const double mu = scheme == Scheme::fedprox ? cfg.mu_prox : 0.0;
            rec = baseline_round(run.server, run.clients, cfg, t, selected, mu, run.traffic);
            rec.scheme = scheme_name(scheme);
        }
        rec.accuracy = evaluate(arch, run.server.enc, run.server.clf, test);
        rec.shared_count = run.server.shared.size();
        rec.benefited_count = run.server.benefited.size();
        run.rounds.push_back(std::move(rec));
    }
    run.final_accuracy = run.rounds.back().accuracy;
    return run;
}

}  // namespace feddpms

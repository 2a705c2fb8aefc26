#include "blockloc/mtl.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

namespace blockloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<RangeEllipse> matching_observations(const Matching& m, const MpcSet& mpcs,
                                                const Network& net) {
    std::vector<RangeEllipse> obs;
    obs.reserve(m.entries.size());
    for (const MatchEntry& e : m.entries)
        obs.push_back(RangeEllipse{net.trp(e.trp), mpcs.at(e.trp)[e.mpc].range});
    return obs;
}

bool entries_less(const std::vector<MatchEntry>& a, const std::vector<MatchEntry>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Position fit covariance seeded from exactly two ranges; nullopt when the
/// range gradients are near parallel (tangential crossing).
std::optional<Mat2> two_range_covariance(const Point2& p, const Trp& ta, const Trp& tb,
                                         double sigma) {
    Mat2 jtj = Mat2::Zero();
    for (const Trp* t : {&ta, &tb}) {
        Point2 g = bistatic_range_gradient(*t, p);
        jtj += g * g.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat2> es(jtj);
    if (!(es.eigenvalues()[1] > 0.0) || es.eigenvalues()[0] <= 1e-12 * es.eigenvalues()[1])
        return std::nullopt;
    return Mat2(sigma * sigma * jtj.inverse());
}

/// The staged matcher.  One instance per run; not reused.
class Engine {
public:
    Engine(const MpcSet& mpcs, const Network& net, const BlockingModel& model,
           const AlgoParams& params, const StageGate& gate)
        : mpcs_(mpcs),
          net_(net),
          model_(model),
          params_(params),
          gate_(gate),
          m_tx_(static_cast<int>(net.txs.size())),
          m_rx_(static_cast<int>(net.rxs.size())) {}

    MtlResult run() {
        const int num_trps = mpcs_.num_trps;
        order_ = processing_order(mpcs_, params_.order, params_.order_seed);
        for (int stage = 1; stage <= num_trps; ++stage) {
            const int zi = order_[stage - 1];
            const Trp trp = net_.trp(zi);
            std::vector<Matching> next;
            next.reserve(pool_.size() + 64);

            for (Matching& m : pool_) advance_matching(m, zi, trp, next);
            seed_matchings(stage, zi, trp, next);

            pool_ = std::move(next);
            record_stage(stage, zi);
        }
        return finalize();
    }

private:
    double scored_nll(const BlockingVector& khat, const Point2& p) {
        ++evals_;
        return model_.nll(khat, p);
    }

    /// Scores a freshly built matching, spawns repair branches when the
    /// prior enforces structural validity and the vector lost it, applies
    /// the stage gate, and appends the survivors.  For monotone priors,
    /// prev_nll carries the parent vector's score at this matching's own
    /// evaluation point: a one-bit extension can only lose probability mass
    /// on a shared table, so scoring below it flags a defective prior.
    void admit(Matching m, double prev_nll, bool check_monotone, std::vector<Matching>& out) {
        m.blocking_nll = scored_nll(m.khat, m.estimate.point);
        if (check_monotone && model_.nll_is_monotone() && m.blocking_nll < prev_nll - 1e-9)
            ++monotone_violations_;

        if (model_.enforces_consistency() && !is_consistent(m.khat, m_tx_, m_rx_)) {
            // Each structurally valid vector one claimed peak below khat is a
            // plausible ground truth: branch with that peak dropped.  Valid
            // vectors one peak above need no branch; the unrepaired matching
            // stays alive and its score already sums over them through the
            // detection-error model.
            for (const BlockingVector& k1 : consistent_within_one(m.khat, m_tx_, m_rx_)) {
                const std::uint32_t dropped = m.khat.bits() & ~k1.bits();
                if (std::popcount(dropped) != 1 || k1.ones() >= m.khat.ones()) continue;
                if (m.size() < 3) continue;  // dropping a peak would leave no fit
                const int trp_index = std::countr_zero(dropped) + 1;
                Matching variant = m;
                variant.id = next_id_++;
                variant.parent = m.id;
                std::erase_if(variant.entries,
                              [&](const MatchEntry& e) { return e.trp == trp_index; });
                variant.khat = k1;
                try {
                    variant.estimate = nls_estimate(matching_observations(variant, mpcs_, net_),
                                                    m.estimate.point, params_.sigma);
                } catch (const SingularGeometry&) {
                    continue;
                }
                variant.blocking_nll = scored_nll(variant.khat, variant.estimate.point);
                if (gate_.admits(variant.khat, variant.blocking_nll))
                    out.push_back(std::move(variant));
            }
        }
        if (gate_.admits(m.khat, m.blocking_nll)) out.push_back(std::move(m));
    }

    /// Extends a live matching with the best residual-gated peak of the new
    /// channel, or carries it unchanged.
    void advance_matching(Matching& m, int zi, const Trp& trp, std::vector<Matching>& out) {
        const auto& peaks = mpcs_.at(zi);
        int best = -1;
        double best_score = kInf;
        for (int j = 0; j < static_cast<int>(peaks.size()); ++j) {
            ++evals_;
            const double res = peaks[j].range - bistatic_range(trp, m.estimate.point);
            const double sl = residual_sigma(m.estimate, trp, params_.sigma);
            const double score = std::abs(res) / sl;
            if (score < best_score) {
                best_score = score;
                best = j;
            }
        }
        if (best >= 0 && best_score <= params_.delta) {
            Matching ext = m;
            ext.id = next_id_++;
            ext.parent = m.id;
            ext.entries.push_back(MatchEntry{zi, best});
            std::sort(ext.entries.begin(), ext.entries.end());
            ext.khat.set(zi - 1, true);
            try {
                ext.estimate = nls_estimate(matching_observations(ext, mpcs_, net_),
                                            m.estimate.point, params_.sigma);
                // The extension property compares parent and child on one
                // shared table, so the parent vector is re-scored at the
                // refit position (the refit may land in a different cell).
                const double parent_here =
                    model_.nll_is_monotone() ? model_.nll(m.khat, ext.estimate.point) : 0.0;
                admit(std::move(ext), parent_here, true, out);
                return;
            } catch (const SingularGeometry&) {
                // fall through to a carry when the refit degenerates
            }
        }
        Matching carry = m;
        carry.id = next_id_++;
        carry.parent = m.id;
        carry.khat.set(zi - 1, false);  // estimate deliberately unchanged
        admit(std::move(carry), m.blocking_nll, true, out);
    }

    /// Fresh two-peak matchings from locus intersections of the new channel
    /// against every earlier one (a target blocked or mis-associated earlier
    /// can still surface here).  No residual gate applies (there is no prior
    /// estimate); the stage gate does.
    void seed_matchings(int stage, int zi, const Trp& trp, std::vector<Matching>& out) {
        for (int u = 1; u < stage; ++u) {
            const int zu = order_[u - 1];
            const Trp trpu = net_.trp(zu);
            const auto& peaks_u = mpcs_.at(zu);
            const auto& peaks_i = mpcs_.at(zi);
            for (int a = 0; a < static_cast<int>(peaks_u.size()); ++a) {
                for (int b = 0; b < static_cast<int>(peaks_i.size()); ++b) {
                    const RangeEllipse eu{trpu, peaks_u[a].range};
                    const RangeEllipse ei{trp, peaks_i[b].range};
                    std::vector<Point2> points;
                    try {
                        points = ellipse_intersections(eu, ei, params_.intersection_tol);
                    } catch (const Error&) {
                        continue;  // degenerate or coincident loci seed nothing
                    }
                    for (const Point2& p : points) {
                        auto cov = two_range_covariance(p, trpu, trp, params_.sigma);
                        if (!cov) continue;
                        Matching seed;
                        seed.id = next_id_++;
                        seed.entries = {MatchEntry{std::min(zu, zi), zu < zi ? a : b},
                                        MatchEntry{std::max(zu, zi), zu < zi ? b : a}};
                        for (int t = 0; t < stage; ++t)
                            seed.khat.set(order_[t] - 1, order_[t] == zu || order_[t] == zi);
                        seed.estimate.point = p;
                        seed.estimate.covariance = *cov;
                        admit(std::move(seed), 0.0, false, out);
                    }
                }
            }
        }
    }

    void record_stage(int stage, int zi) {
        std::set<std::pair<long long, long long>> locations;
        for (const Matching& m : pool_)
            locations.insert({std::llround(m.estimate.point.x() * 1e6),
                              std::llround(m.estimate.point.y() * 1e6)});
        stages_.push_back(StageDiagnostics{stage, zi, static_cast<int>(pool_.size()),
                                           static_cast<int>(locations.size()), evals_});
    }

    MtlResult finalize() {
        struct Scored {
            double objective;
            const Matching* matching;
        };
        std::vector<Scored> scored;
        scored.reserve(pool_.size());
        for (const Matching& m : pool_) {
            ++evals_;
            scored.push_back({selection_objective(m, mpcs_, net_, model_, params_.sigma), &m});
        }
        std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
            if (a.objective != b.objective) return a.objective < b.objective;
            if (a.matching->size() != b.matching->size())
                return a.matching->size() > b.matching->size();
            return entries_less(a.matching->entries, b.matching->entries);
        });

        const double radius =
            params_.dedupe_radius > 0.0 ? params_.dedupe_radius : 3.0 * params_.sigma;
        MtlResult result;
        result.order = order_;
        result.stages = std::move(stages_);
        result.nll_monotone_violations = monotone_violations_;

        std::vector<char> suppressed(scored.size(), 0);
        std::set<std::pair<int, int>> used_slots;
        for (std::size_t i = 0; i < scored.size(); ++i) {
            if (suppressed[i]) continue;
            if (scored[i].objective >= 0.0) break;  // declaring more targets only costs
            const Matching& m = *scored[i].matching;
            bool overlaps = false;
            for (const MatchEntry& e : m.entries)
                if (used_slots.count({e.trp, e.mpc})) overlaps = true;
            if (overlaps) continue;  // peaks already explained by a better matching
            for (const MatchEntry& e : m.entries) used_slots.insert({e.trp, e.mpc});
            for (std::size_t j = i + 1; j < scored.size(); ++j)
                if ((scored[j].matching->estimate.point - m.estimate.point).norm() <= radius)
                    suppressed[j] = 1;
            result.estimates.push_back(m);
            result.objective += scored[i].objective;
        }
        result.likelihood_evals = evals_;
        return result;
    }

    const MpcSet& mpcs_;
    const Network& net_;
    const BlockingModel& model_;
    AlgoParams params_;
    StageGate gate_;
    int m_tx_, m_rx_;
    std::vector<int> order_;
    std::vector<Matching> pool_;
    std::vector<StageDiagnostics> stages_;
    long evals_ = 0;
    int monotone_violations_ = 0;
    int next_id_ = 0;
};

}  // namespace

std::vector<int> processing_order(const MpcSet& mpcs, OrderStrategy strategy,
                                  std::uint64_t seed) {
    std::vector<int> order(mpcs.num_trps);
    std::iota(order.begin(), order.end(), 1);
    const auto counts = mpcs.counts();
    switch (strategy) {
        case OrderStrategy::identity:
            break;
        case OrderStrategy::most_mpcs_first:
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (counts[a - 1] != counts[b - 1]) return counts[a - 1] > counts[b - 1];
                return a < b;
            });
            break;
        case OrderStrategy::fewest_mpcs_first:
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                if (counts[a - 1] != counts[b - 1]) return counts[a - 1] < counts[b - 1];
                return a < b;
            });
            break;
        case OrderStrategy::shuffled: {
            Rng rng = make_stream(seed, 0, stream::order);
            std::shuffle(order.begin(), order.end(), rng);
            break;
        }
    }
    return order;
}

std::vector<Point2> MtlResult::points() const {
    std::vector<Point2> out;
    out.reserve(estimates.size());
    for (const Matching& m : estimates) out.push_back(m.estimate.point);
    return out;
}

std::pair<double, double> vector_likelihood(const Matching& matching,
                                            const std::optional<RangeEllipse>& candidate,
                                            const BlockingModel& model,
                                            const AlgoParams& params) {
    double residual_score = 0.0;
    BlockingVector khat = matching.khat;
    if (candidate) {
        const double res = range_residual(matching.estimate.point, *candidate);
        const double sl = residual_sigma(matching.estimate, candidate->trp, params.sigma);
        residual_score = std::abs(res) / sl;
        khat.set(candidate->trp.index - 1, true);
    }
    return {residual_score, model.nll(khat, matching.estimate.point)};
}

MtlResult run_bayesian_mtl(const MpcSet& mpcs, const Network& net, const BlockingModel& model,
                           const AlgoParams& params, const StageGate* gate_override) {
    StageGate gate;
    gate.mu = params.mu;
    if (gate_override) gate = *gate_override;
    return Engine(mpcs, net, model, params, gate).run();
}

MtlResult run_size_threshold_baseline(const MpcSet& mpcs, const Network& net,
                                      const IndependentBlocking& prior, const AlgoParams& params,
                                      int phi) {
    IndependentBlockingModel model(prior);
    StageGate gate;
    gate.max_missing = phi;
    return Engine(mpcs, net, model, params, gate).run();
}

double selection_objective(const Matching& matching, const MpcSet& mpcs, const Network& net,
                           const BlockingModel& model, double sigma) {
    double fit = 0.0;
    for (const MatchEntry& e : matching.entries) {
        const double r = mpcs.at(e.trp)[e.mpc].range;
        const double pred = bistatic_range(net.trp(e.trp), matching.estimate.point);
        fit += (r - pred) * (r - pred);
    }
    return fit / (sigma * sigma) +
           matching.size() * std::log(std::sqrt(2.0 * M_PI) * sigma) +
           model.nll(matching.khat, matching.estimate.point);
}

double selection_objective(const std::vector<Matching>& matchings, const MpcSet& mpcs,
                           const Network& net, const BlockingModel& model, double sigma) {
    double total = 0.0;
    for (const Matching& m : matchings)
        total += selection_objective(m, mpcs, net, model, sigma);
    return total;
}

BruteForceResult brute_force_p3(const MpcSet& mpcs, const Network& net,
                                const BlockingModel& model, const AlgoParams& params,
                                int max_targets, long guard) {
    const int num_trps = mpcs.num_trps;

    double combos = 1.0;
    for (int i = 1; i <= num_trps; ++i)
        combos *= static_cast<double>(mpcs.at(i).size()) + 1.0;
    if (combos > static_cast<double>(guard))
        throw InstanceTooLarge("per-target matching count " + std::to_string(combos) +
                               " exceeds the enumeration guard");

    // Enumerate every single-target matching (>= 2 claimed peaks, at most
    // one per channel, like the staged matcher's candidates), fit it, and
    // keep those whose inclusion can lower the objective.
    struct Candidate {
        Matching matching;
        double objective;
        std::vector<int> slots;  // global peak ids, sorted
    };
    std::vector<Candidate> candidates;
    std::vector<int> slot_base(num_trps + 1, 0);
    for (int i = 1; i <= num_trps; ++i)
        slot_base[i] = (i == 1 ? 0 : slot_base[i - 1]) + static_cast<int>(mpcs.at(i).size());
    auto slot_id = [&](int trp, int mpc) {
        return (trp == 1 ? 0 : slot_base[trp - 1]) + mpc;
    };

    std::vector<MatchEntry> chosen;
    auto evaluate = [&]() {
        if (static_cast<int>(chosen.size()) < 2) return;
        Matching m;
        m.entries = chosen;
        for (int i = 1; i <= num_trps; ++i) m.khat.set(i - 1, false);
        for (const MatchEntry& e : chosen) m.khat.set(e.trp - 1, true);

        // Fit from every pairwise locus intersection and keep the best
        // objective the fits reach.
        auto obs = matching_observations(m, mpcs, net);
        double best_obj = kInf;
        LocationEstimate best_fit;
        for (std::size_t a = 0; a + 1 < obs.size(); ++a)
            for (std::size_t b = a + 1; b < obs.size(); ++b) {
                std::vector<Point2> pts;
                try {
                    pts = ellipse_intersections(obs[a], obs[b], params.intersection_tol);
                } catch (const Error&) {
                    continue;
                }
                for (const Point2& p : pts) {
                    Matching trial = m;
                    try {
                        trial.estimate = nls_estimate(obs, p, params.sigma);
                    } catch (const SingularGeometry&) {
                        continue;
                    }
                    const double obj =
                        selection_objective(trial, mpcs, net, model, params.sigma);
                    if (obj < best_obj) {
                        best_obj = obj;
                        best_fit = trial.estimate;
                    }
                }
            }
        if (best_obj >= 0.0) return;  // unfit, or can never be part of a minimizer
        m.estimate = best_fit;
        m.blocking_nll = model.nll(m.khat, m.estimate.point);
        Candidate c;
        c.matching = std::move(m);
        c.objective = best_obj;
        for (const MatchEntry& e : chosen) c.slots.push_back(slot_id(e.trp, e.mpc));
        std::sort(c.slots.begin(), c.slots.end());
        candidates.push_back(std::move(c));
    };
    auto enumerate = [&](auto&& self, int trp) -> void {
        if (trp > num_trps) {
            evaluate();
            return;
        }
        self(self, trp + 1);  // claim nothing at this channel
        for (int j = 0; j < static_cast<int>(mpcs.at(trp).size()); ++j) {
            chosen.push_back(MatchEntry{trp, j});
            self(self, trp + 1);
            chosen.pop_back();
        }
    };
    enumerate(enumerate, 1);

    // Exhaustive minimum over sets of pairwise peak-disjoint candidates.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.objective < b.objective;
    });
    BruteForceResult best;  // the empty set scores zero
    std::vector<const Candidate*> current;
    long evaluated = 0;
    auto disjoint = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i] == b[j]) return false;
            a[i] < b[j] ? ++i : ++j;
        }
        return true;
    };
    auto search = [&](auto&& self, std::size_t from, double total) -> void {
        if (++evaluated > guard)
            throw InstanceTooLarge("candidate-set enumeration exceeds the guard");
        if (total < best.objective) {
            best.objective = total;
            best.matchings.clear();
            for (const Candidate* c : current) best.matchings.push_back(c->matching);
        }
        if (static_cast<int>(current.size()) >= max_targets) return;
        for (std::size_t i = from; i < candidates.size(); ++i) {
            bool ok = true;
            for (const Candidate* c : current)
                if (!disjoint(c->slots, candidates[i].slots)) {
                    ok = false;
                    break;
                }
            if (!ok) continue;
            current.push_back(&candidates[i]);
            self(self, i + 1, total + candidates[i].objective);
            current.pop_back();
        }
    };
    search(search, 0, 0.0);
    best.sets_evaluated = evaluated;
    return best;
}

double mu_of_phi(int phi, double p_missed, int num_trps) {
    if (p_missed >= 0.5)
        std::cerr << "warning: per-channel miss rate " << p_missed
                  << " >= 1/2; the threshold is no longer monotone in the allowed miss count\n";
    return static_cast<double>(num_trps - phi) * -std::log(1.0 - p_missed) +
           static_cast<double>(phi) * -std::log(p_missed);
}

}  // namespace blockloc

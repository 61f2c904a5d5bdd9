#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ctxpara/entailment.hpp"
#include "ctxpara/fluency.hpp"
#include "ctxpara/metrics.hpp"
#include "ctxpara/rl.hpp"
#include "toy_bandit.hpp"

using namespace ctxpara;
using namespace ctxpara::rl;

namespace {

constexpr int kWords = 16;

struct Bandit {
    WordTokenizer tok{toy::bandit_vocab(kWords)};
    generator::TransformerLM policy;
    generator::TransformerLM reference;
    std::vector<RlPrompt> prompts;
    toy::TokenReward reward;

    explicit Bandit(std::uint64_t seed)
        : policy(tok, toy::bandit_config(static_cast<int>(tok.vocab().size())), seed),
          reference(policy),
          prompts(toy::bandit_prompts(policy, 16, kWords, 4, seed + 100)),
          reward(tok.vocab().id_of("w3")) {}
};

RlConfig bandit_config(int steps, double beta, double lr = 1e-2) {
    RlConfig c;
    c.total_steps = steps;
    c.batch_size = 8;
    c.ppo_epochs = 4;
    c.learning_rate = lr;
    c.kl_beta = beta;
    c.response_budget = 4;
    c.decode = {generator::DecodeStrategy::top_p, 1.0, 1.0, 4, 0};
    c.seed = 1;
    return c;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

}  // namespace

TEST(KlReward, Properties) {
    EXPECT_EQ(kl_penalized_reward(0.4, -2.0, -2.0, 0.7), 0.4);
    EXPECT_EQ(kl_penalized_reward(0.4, -1.0, -9.0, 0.0), 0.4);
    EXPECT_NEAR(kl_penalized_reward(0.8, -1.0, -1.5, 0.2), 0.7, 1e-12);
    EXPECT_GT(kl_penalized_reward(0.5, -3.0, -1.0, 0.5), 0.5);  // negative log-ratio raises the reward
    double prev = 1.0;
    for (double beta = 0.1; beta < 3.0; beta += 0.1) {
        const double r = kl_penalized_reward(1.0, -1.0, -2.0, beta);
        EXPECT_LT(r, prev);
        prev = r;
    }
    EXPECT_THROW(kl_penalized_reward(1.0, -1.0, -1.0, -0.1), ValidationError);
    EXPECT_THROW(kl_penalized_reward(NAN, -1.0, -1.0, 0.1), ValidationError);
    EXPECT_THROW(kl_penalized_reward(1.0, -INFINITY, -1.0, 0.1), ValidationError);
}

TEST(Whiten, MeanZeroUnitVariance) {
    const auto w = whiten({1.0, 2.0, 3.0, 10.0});
    double m = 0.0, v = 0.0;
    for (double x : w) m += x;
    m /= 4.0;
    for (double x : w) v += (x - m) * (x - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 4.0, 1.0, 1e-12);
    EXPECT_EQ(whiten({3.0, 3.0, 3.0}), (std::vector<double>{0.0, 0.0, 0.0}));
    EXPECT_TRUE(whiten({}).empty());
}

TEST(Config, ValidateListsEveryViolation) {
    RlConfig c;
    c.batch_size = 0;
    c.clip_epsilon = 0.0;
    c.kl_beta = -1.0;
    try {
        c.validate();
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("batch_size"), std::string::npos);
        EXPECT_NE(msg.find("clip_epsilon"), std::string::npos);
        EXPECT_NE(msg.find("kl_beta"), std::string::npos);
    }
    EXPECT_EQ(RlConfig::from_json(RlConfig{}.to_json()).to_json(), RlConfig{}.to_json());
}

TEST(Rollouts, ShapedEqualsRawWhenPolicyIsReference) {
    Bandit b(1);
    Rng rng(2);
    const auto batch =
        collect_rollouts(b.policy, b.reference, b.prompts, all_indices(b.prompts.size()), b.reward,
                         bandit_config(1, 0.5).decode, 0.5, rng);
    ASSERT_EQ(batch.rollouts.size(), b.prompts.size());
    for (const auto& r : batch.rollouts) EXPECT_NEAR(r.shaped_reward, r.raw_reward, 1e-12);
    EXPECT_NEAR(batch.mean_log_ratio(), 0.0, 1e-12);
}

TEST(Rollouts, VocabularyMismatchRejected) {
    Bandit b(1);
    WordTokenizer other(toy::bandit_vocab(kWords + 1));
    generator::TransformerLM ref(other, toy::bandit_config(static_cast<int>(other.vocab().size())), 3);
    Rng rng(1);
    EXPECT_THROW(collect_rollouts(b.policy, ref, b.prompts, {0}, b.reward, bandit_config(1, 0.1).decode, 0.1, rng),
                 ValidationError);
}

TEST(Rollouts, RawRewardMatchesBatchScoring) {
    Bandit b(2);
    entailment::HashEncoder enc(entailment::EncoderConfig{});
    metrics::HashTokenEmbedder emb(enc);
    fluency::LogisticFluencyModel flu(fluency::FluencyConfig{});
    const metrics::CompositeEvaluator ev({&enc, &flu, &emb, {}});
    const CompositeReward reward(ev);
    Rng rng(7);
    const auto batch = collect_rollouts(b.policy, b.reference, b.prompts, all_indices(b.prompts.size()), reward,
                                        bandit_config(1, 0.1).decode, 0.1, rng);
    for (const auto& r : batch.rollouts) {
        const auto& p = b.prompts[r.prompt_index];
        const auto s = ev.score(p.context, p.actual, r.generation.text, p.id);
        EXPECT_EQ(r.raw_reward, s.composite);
        ASSERT_TRUE(r.breakdown.has_value());
        EXPECT_EQ(r.breakdown->composite, s.composite);
    }
}

TEST(Ppo, ZeroLearningRateLeavesPolicy) {
    Bandit b(3);
    const auto cfg = bandit_config(1, 0.1, 0.0);
    const auto before = nn::parameter_hash(b.policy.network().parameters());
    PpoState state(b.policy, cfg);
    Rng rng(4);
    const auto batch = collect_rollouts(b.policy, b.reference, b.prompts, all_indices(8), b.reward, cfg.decode,
                                        cfg.kl_beta, rng);
    const auto stats = ppo_update(state, b.prompts, batch, cfg, rng);
    EXPECT_EQ(nn::parameter_hash(b.policy.network().parameters()), before);
    EXPECT_EQ(stats.clip_fraction, 0.0);
    EXPECT_NEAR(stats.approx_kl, 0.0, 1e-20);
}

TEST(Ppo, FirstEpochNeverClips) {
    Bandit b(4);
    const auto cfg = bandit_config(1, 0.1, 5e-2);
    PpoState state(b.policy, cfg);
    Rng rng(5);
    const auto batch = collect_rollouts(b.policy, b.reference, b.prompts, all_indices(8), b.reward, cfg.decode,
                                        cfg.kl_beta, rng);
    const auto stats = ppo_update(state, b.prompts, batch, cfg, rng);
    ASSERT_EQ(stats.clip_fraction_per_epoch.size(), 4u);
    EXPECT_EQ(stats.clip_fraction_per_epoch[0], 0.0);
    EXPECT_TRUE(std::isfinite(stats.policy_loss));
    EXPECT_TRUE(std::isfinite(stats.value_loss));
}

TEST(TrainRl, ReferenceFrozenAndCurveShape) {
    Bandit b(5);
    const auto ref_hash = nn::parameter_hash(b.reference.network().parameters());
    int calls = 0;
    const auto res = train_rl(b.policy, b.reference, b.prompts, b.reward, bandit_config(5, 0.1),
                              [&](const CurveRow&) { ++calls; });
    EXPECT_EQ(calls, 5);
    ASSERT_EQ(res.curve.size(), 5u);
    EXPECT_EQ(res.curve[0].step, 1);
    EXPECT_NEAR(res.curve[0].mean_shaped_reward, res.curve[0].mean_raw_reward, 1e-12);
    EXPECT_EQ(res.reference_hash_start, ref_hash);
    EXPECT_EQ(res.reference_hash_end, ref_hash);
    EXPECT_EQ(nn::parameter_hash(b.reference.network().parameters()), ref_hash);
    EXPECT_NE(nn::parameter_hash(b.policy.network().parameters()), ref_hash);
    const auto csv = curve_csv(res.curve);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,mean_raw_reward,mean_shaped_reward,approx_kl,clip_fraction,kl_beta");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(TrainRl, Deterministic) {
    Bandit a(6), b(6);
    train_rl(a.policy, a.reference, a.prompts, a.reward, bandit_config(4, 0.1));
    train_rl(b.policy, b.reference, b.prompts, b.reward, bandit_config(4, 0.1));
    EXPECT_EQ(nn::parameter_hash(a.policy.network().parameters()),
              nn::parameter_hash(b.policy.network().parameters()));
}

TEST(TrainRl, RewardImprovesOnBandit) {
    Bandit b(7);
    const auto decode = bandit_config(1, 0.0).decode;
    const double before = mean_reward(b.policy, b.prompts, b.reward, decode, 16, 9);
    train_rl(b.policy, b.reference, b.prompts, b.reward, bandit_config(40, 0.05));
    EXPECT_GT(mean_reward(b.policy, b.prompts, b.reward, decode, 16, 9), before);
}

TEST(TrainRl, LargeBetaLimitsDrift) {
    auto drift = [](double beta) {
        Bandit b(8);
        train_rl(b.policy, b.reference, b.prompts, b.reward, bandit_config(30, beta));
        Rng rng(10);
        double total = 0.0;
        for (int rep = 0; rep < 8; ++rep) {
            const auto batch = collect_rollouts(b.policy, b.reference, b.prompts, all_indices(b.prompts.size()),
                                                b.reward, bandit_config(1, 0.0).decode, 0.0, rng);
            total += batch.mean_log_ratio();
        }
        return total / 8.0;
    };
    EXPECT_LT(drift(2.0), drift(0.0));
}

TEST(TrainRl, EmptyPromptsRejected) {
    Bandit b(9);
    EXPECT_THROW(train_rl(b.policy, b.reference, {}, b.reward, bandit_config(1, 0.1)), ValidationError);
}

#include <gtest/gtest.h>

#include <cstring>
#include <functional>
#include <sstream>

#include "gpvtf/trainer.hpp"

using namespace gpvtf;

namespace {

PairedDataset small_dataset(std::uint64_t seed, double separation = 3.0) {
    SynthParams p;
    p.k = 3;
    p.per_cluster = 40;
    p.d1 = 10;
    p.d2 = 8;
    p.separation = separation;
    p.seed = seed;
    return synth_dataset(p);
}

TrainConfig small_config(std::uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.max_iter = 3;
    c.batch_size = 32;
    c.encoder_hidden = 16;
    c.latent_dim = 6;
    c.generator_hidden = 12;
    c.discriminator_hidden = 8;
    c.minibatch_kernels = 4;
    c.minibatch_kernel_dim = 3;
    c.noise_dim = 5;
    c.kmeans_restarts = 2;
    c.tol = 0.0;
    return c;
}

// FNV-1a over the bit patterns of a parameter block.
std::uint64_t hash_values(std::span<const double> v, std::uint64_t h = 1469598103934665603ull) {
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::uint64_t hash_mlp(const Mlp& net) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& l : net.layers) {
        h = hash_values(l.weights.data(), h);
        h = hash_values(l.bias, h);
    }
    return h;
}

std::uint64_t hash_disc(const Discriminator& d) {
    std::uint64_t h = hash_values(d.hidden.weights.data());
    h = hash_values(d.hidden.bias, h);
    h = hash_values(d.tensor.data(), h);
    h = hash_values(d.output.weights.data(), h);
    return hash_values(d.output.bias, h);
}

struct Hashes {
    std::array<std::uint64_t, 2> enc, gen, disc;
    bool operator==(const Hashes&) const = default;
};

Hashes hash_all(const Trainer& t) {
    Hashes h;
    for (Modality m : {Modality::visual, Modality::tactile}) {
        const auto i = static_cast<std::size_t>(m);
        h.enc[i] = hash_mlp(t.encoder(m));
        h.gen[i] = hash_mlp(t.generator(m));
        h.disc[i] = hash_disc(t.discriminator(m));
    }
    return h;
}

}  // namespace

TEST(Trainer, SameSeedGivesIdenticalInitialCentersAndShapes) {
    const auto ds = small_dataset(1);
    const auto mask = make_mask(ds.size(), 0.2, 3);
    const Trainer a(ds, mask, small_config(5)), b(ds, mask, small_config(5));
    for (std::size_t m = 0; m < 3; ++m) {
        EXPECT_EQ(a.clusters().centers[m], b.clusters().centers[m]);
        EXPECT_EQ(a.clusters().centers[m].rows(), 3u);
        EXPECT_EQ(a.clusters().centers[m].cols(), 6u);
    }
}

TEST(Trainer, CompleteDataInitialFusionIsConvexMix) {
    const auto ds = small_dataset(2);
    const Trainer t(ds, MissingMask::complete(ds.size()), small_config(1));
    const Matrix expect = 0.8 * t.latents(0) + 0.2 * t.latents(1);
    ASSERT_TRUE(t.fused().same_shape(expect));
    for (std::size_t i = 0; i < expect.size(); ++i)
        EXPECT_DOUBLE_EQ(t.fused().data()[i], expect.data()[i]);
}

TEST(Trainer, MissingSlotsStartFromGeneratorOutput) {
    const auto ds = small_dataset(3);
    const auto mask = make_mask(ds.size(), 0.3, 4);
    const Trainer t(ds, mask, small_config(2));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (mask.visual_present[i]) continue;
        for (std::size_t j = 0; j < 6; ++j)
            EXPECT_EQ(t.latents(0)(i, j), t.fakes(Modality::visual)(i, j));
    }
}

TEST(Trainer, NoTrainingPredictionIsArgmaxOverInitialCenters) {
    const auto ds = small_dataset(4);
    auto c = small_config(3);
    c.max_iter = 0;
    const auto mask = make_mask(ds.size(), 0.1, 1);
    const Trainer t(ds, mask, c);
    const auto labels = t.predict();
    EXPECT_EQ(labels, row_argmax(soft_assign(t.fused(), t.clusters().centers[2], 1.0)));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        // the Student's-t kernel is monotone in distance, so argmax is the nearest center
        EXPECT_EQ(static_cast<std::size_t>(labels[i]),
                  detail::nearest_center(t.fused().row(i), t.clusters().centers[2]));
        EXPECT_GE(labels[i], 0);
        EXPECT_LT(labels[i], 3);
    }
    const TrainReport r = run(ds, mask, c);
    EXPECT_EQ(r.epochs_run, 0u);
    EXPECT_EQ(r.labels, labels);
}

TEST(Trainer, RunIsDeterministic) {
    const auto ds = small_dataset(5);
    const auto mask = make_mask(ds.size(), 0.2, 9);
    const TrainReport a = run(ds, mask, small_config(11));
    const TrainReport b = run(ds, mask, small_config(11));
    EXPECT_EQ(a.labels, b.labels);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        EXPECT_EQ(a.trace[e].e1, b.trace[e].e1);
        EXPECT_EQ(a.trace[e].g1, b.trace[e].g1);
        EXPECT_EQ(a.trace[e].d2, b.trace[e].d2);
    }
    EXPECT_EQ(*a.acc, *b.acc);
}

TEST(Trainer, DisabledGanHasZeroAdversarialTracesAndFakes) {
    const auto ds = small_dataset(6);
    auto c = small_config(2);
    c.disable_gan = true;
    const auto mask = make_mask(ds.size(), 0.2, 2);
    Trainer t(ds, mask, c);
    for (int e = 0; e < 3; ++e) {
        const EpochLosses l = t.train_epoch();
        EXPECT_EQ(l.g1, 0.0);
        EXPECT_EQ(l.g2, 0.0);
        EXPECT_EQ(l.d1, 0.0);
        EXPECT_EQ(l.d2, 0.0);
        EXPECT_GT(l.e1, 0.0);
    }
    for (double v : t.fakes(Modality::visual).data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(t.counters().generator_updates[0], 0u);
    EXPECT_EQ(t.counters().discriminator_updates[1], 0u);
}

TEST(Trainer, DisabledGanMatchesZeroPhiWithGanModulesUnused) {
    // the no-GAN path must not depend on any generator or discriminator state
    const auto ds = small_dataset(7);
    const auto mask = MissingMask::complete(ds.size());
    auto c = small_config(4);
    c.disable_gan = true;
    c.phi1 = c.phi2 = 0.0;
    auto c_other = c;
    c_other.generator_hidden = 30;
    c_other.discriminator_hidden = 3;
    const TrainReport a = run(ds, mask, c), b = run(ds, mask, c_other);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        EXPECT_EQ(a.trace[e].e1, b.trace[e].e1);
        EXPECT_EQ(a.trace[e].e2, b.trace[e].e2);
    }
}

TEST(Trainer, FiveGeneratorUpdatesPerDiscriminatorUpdate) {
    const auto ds = small_dataset(8);
    auto c = small_config(1);
    c.batch_size = 64;
    Trainer t(ds, make_mask(ds.size(), 0.1, 5), c);
    t.train_epoch();
    t.train_epoch();
    const auto& k = t.counters();
    // 120 samples → batches of 64 and 56
    EXPECT_EQ(k.batches, 4u);
    EXPECT_EQ(k.largest_batch, 64u);
    EXPECT_EQ(k.encoder_updates, 4u);
    for (std::size_t m = 0; m < 2; ++m) {
        EXPECT_EQ(k.discriminator_updates[m], 4u);
        EXPECT_EQ(k.generator_updates[m], 5u * k.discriminator_updates[m]);
    }
    EXPECT_EQ(t.generator_optimizer(Modality::visual).steps(), 20u);
    EXPECT_EQ(t.discriminator_optimizer(Modality::tactile).steps(), 4u);
}

TEST(Trainer, DefaultLearningRatesReachOptimizers) {
    const auto ds = small_dataset(9);
    auto c = small_config(1);
    c.lr_encoders = 1e-4;
    c.lr_g1 = 3e-6;
    c.lr_g2 = 4e-6;
    c.lr_d = 1e-6;
    const Trainer t(ds, MissingMask::complete(ds.size()), c);
    EXPECT_EQ(t.encoder_optimizer(Modality::visual).learning_rate(), 1e-4);
    EXPECT_EQ(t.generator_optimizer(Modality::visual).learning_rate(), 3e-6);
    EXPECT_EQ(t.generator_optimizer(Modality::tactile).learning_rate(), 4e-6);
    EXPECT_EQ(t.discriminator_optimizer(Modality::visual).learning_rate(), 1e-6);
}

TEST(Trainer, StepsOnlyTouchTheirOwnParameters) {
    const auto ds = small_dataset(10);
    Trainer t(ds, make_mask(ds.size(), 0.2, 1), small_config(6));
    std::vector<std::size_t> rows(32);
    std::iota(rows.begin(), rows.end(), 10);
    const Batch b = t.make_batch(rows);

    Hashes before = hash_all(t);
    t.encoder_step(b);
    Hashes after = hash_all(t);
    EXPECT_NE(after.enc, before.enc);
    EXPECT_EQ(after.gen, before.gen);
    EXPECT_EQ(after.disc, before.disc);

    before = after;
    t.generator_step(b, Modality::visual);
    after = hash_all(t);
    EXPECT_EQ(after.enc, before.enc);
    EXPECT_NE(after.gen[0], before.gen[0]);
    EXPECT_EQ(after.gen[1], before.gen[1]);
    EXPECT_EQ(after.disc, before.disc);

    before = after;
    t.discriminator_step(b, Modality::tactile);
    after = hash_all(t);
    EXPECT_EQ(after.enc, before.enc);
    EXPECT_EQ(after.gen, before.gen);
    EXPECT_EQ(after.disc[0], before.disc[0]);
    EXPECT_NE(after.disc[1], before.disc[1]);
}

TEST(Trainer, BetaZeroDecouplesVisualEncoderFromTactileData) {
    auto ds = small_dataset(11);
    const auto mask = make_mask(ds.size(), 0.2, 7);
    auto c = small_config(8);
    c.beta = 0.0;
    Trainer a(ds, mask, c);
    ds.tactile *= -3.0;
    ds.tactile(0, 0) += 17.0;
    Trainer b(ds, mask, c);
    for (int e = 0; e < 3; ++e) {
        a.train_epoch();
        b.train_epoch();
    }
    EXPECT_EQ(hash_mlp(a.encoder(Modality::visual)), hash_mlp(b.encoder(Modality::visual)));
    EXPECT_NE(hash_mlp(a.encoder(Modality::tactile)), hash_mlp(b.encoder(Modality::tactile)));
}

TEST(Trainer, BetaCouplesEncodersByDefault) {
    auto ds = small_dataset(11);
    const auto mask = MissingMask::complete(ds.size());
    const auto c = small_config(8);
    Trainer a(ds, mask, c);
    ds.tactile *= -3.0;
    Trainer b(ds, mask, c);
    a.train_epoch();
    b.train_epoch();
    EXPECT_NE(hash_mlp(a.encoder(Modality::visual)), hash_mlp(b.encoder(Modality::visual)));
}

TEST(Trainer, FusedKlLossFallsOnCompleteSeparatedData) {
    SynthParams p;
    p.k = 4;
    p.per_cluster = 60;
    p.separation = 6.0;
    p.modality_noise = 0.5;
    p.seed = 3;
    const auto ds = synth_dataset(p);
    TrainConfig c;
    c.seed = 2;
    c.max_iter = 20;
    c.tol = 0.0;
    c.kmeans_restarts = 3;
    const TrainReport r = run(ds, MissingMask::complete(ds.size()), c);
    ASSERT_EQ(r.trace.size(), 20u);
    const double first = r.trace.front().e1 + r.trace.front().e2;
    const double last = r.trace.back().e1 + r.trace.back().e2;
    EXPECT_LT(last, first);
}

TEST(Trainer, EarlyStopWhenLabelsSettle) {
    const auto ds = small_dataset(12, 8.0);
    auto c = small_config(3);
    c.max_iter = 50;
    c.tol = 0.001;
    const TrainReport r = run(ds, MissingMask::complete(ds.size()), c);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.epochs_run, 50u);
    EXPECT_LT(r.trace.back().label_change, 0.001);
}

TEST(Trainer, RejectsInvalidInputs) {
    const auto ds = small_dataset(13);
    auto c = small_config(1);
    c.lr_d = 0.0;
    EXPECT_THROW(Trainer(ds, MissingMask::complete(ds.size()), c), ParameterError);
    EXPECT_THROW(Trainer(ds, MissingMask::complete(ds.size() - 1), small_config(1)),
                 AlignmentError);
    auto tiny = small_dataset(13);
    tiny.visual = select_rows(tiny.visual, std::vector<std::size_t>{0, 1});
    tiny.tactile = select_rows(tiny.tactile, std::vector<std::size_t>{0, 1});
    tiny.labels = {0, 1};
    EXPECT_THROW(Trainer(tiny, MissingMask::complete(2), small_config(1)), ParameterError);
}

TEST(Trainer, NonFiniteLossRaisesDivergenceWithEpoch) {
    const auto ds = small_dataset(14);
    auto c = small_config(1);
    c.lr_encoders = 1e300;
    Trainer t(ds, MissingMask::complete(ds.size()), c);
    try {
        for (int e = 0; e < 5; ++e) t.train_epoch();
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.epoch, 1u);
        EXPECT_FALSE(e.loss_name.empty());
    }
}

TEST(Config, KeyValuesRoundTrip) {
    TrainConfig c;
    c.alpha = 0.35;
    c.disable_gan = true;
    c.center_update = CenterUpdate::reestimate;
    TrainConfig back;
    for (const auto& [k, v] : to_key_values(c)) apply_key_value(back, k, v);
    EXPECT_EQ(to_key_values(back), to_key_values(c));
}

TEST(Config, DefaultsMatchPublishedValues) {
    const TrainConfig c;
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.lr_encoders, 1e-4);
    EXPECT_EQ(c.lr_g1, 3e-6);
    EXPECT_EQ(c.lr_g2, 4e-6);
    EXPECT_EQ(c.lr_d, 1e-6);
    EXPECT_EQ(c.g_updates_per_d, 5u);
    EXPECT_EQ(c.alpha, 0.2);
    EXPECT_EQ(c.beta, 1.0);
    EXPECT_EQ(c.lambda, 0.1);
    EXPECT_EQ(c.phi1, 0.01);
    EXPECT_EQ(c.phi2, 0.01);
    EXPECT_EQ(c.gamma, 1.0);
    EXPECT_EQ(c.sigma, 0.1);
}

TEST(Config, TextDocumentWithCommentsAndBothSeparators) {
    TrainConfig c;
    std::istringstream in("# comment\nalpha = 0.3\nbeta: 2  # trailing\n\nnon_saturating = true\n");
    apply_config_text(c, in);
    EXPECT_EQ(c.alpha, 0.3);
    EXPECT_EQ(c.beta, 2.0);
    EXPECT_TRUE(c.non_saturating);
}

TEST(Config, UnknownKeyAndBadValuesAreRejected) {
    TrainConfig c;
    EXPECT_THROW(apply_key_value(c, "alpah", "0.1"), ParameterError);
    EXPECT_THROW(apply_key_value(c, "alpha", "abc"), ParameterError);
    EXPECT_THROW(apply_key_value(c, "max_iter", "-3"), ParameterError);
    EXPECT_THROW(apply_key_value(c, "disable_gan", "maybe"), ParameterError);
}

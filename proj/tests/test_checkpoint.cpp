#include <gtest/gtest.h>

#include <sstream>

#include "gpvtf/checkpoint.hpp"
#include "gpvtf/trainer.hpp"

using namespace gpvtf;

namespace {

TrainConfig small_config() {
    TrainConfig c;
    c.seed = 21;
    c.max_iter = 4;
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

PairedDataset small_dataset() {
    SynthParams p;
    p.k = 3;
    p.per_cluster = 30;
    p.d1 = 9;
    p.d2 = 7;
    p.seed = 5;
    return synth_dataset(p);
}

}  // namespace

TEST(Archive, TextRoundTripIsExact) {
    Archive a;
    a.meta["note"] = "two words";
    a.tensors["w"] = Matrix{{0.1, -2.5e-300}, {1.0 / 3.0, 7.0}};
    a.tensors["empty"] = Matrix(0, 3);
    std::stringstream s;
    write_archive(s, a);
    const Archive b = read_archive(s);
    EXPECT_EQ(b.meta, a.meta);
    EXPECT_EQ(b.tensor("w"), a.tensor("w"));
    EXPECT_EQ(b.tensor("empty").cols(), 3u);
}

TEST(Archive, RejectsForeignAndTruncatedInput) {
    std::stringstream bad("NOT-A-CHECKPOINT 1\nend\n");
    EXPECT_THROW(read_archive(bad), ParseError);
    std::stringstream version("GPVTF-CHECKPOINT 99\nend\n");
    EXPECT_THROW(read_archive(version), ParseError);
    std::stringstream truncated("GPVTF-CHECKPOINT 1\ntensor w 2 2\n1,2\n");
    EXPECT_THROW(read_archive(truncated), ParseError);
    std::stringstream wide("GPVTF-CHECKPOINT 1\ntensor w 1 2\n1,2,3\nend\n");
    EXPECT_THROW(read_archive(wide), ParseError);
    std::stringstream no_end("GPVTF-CHECKPOINT 1\nmeta a b\n");
    EXPECT_THROW(read_archive(no_end), ParseError);
}

TEST(Archive, MissingTensorIsParseError) {
    EXPECT_THROW(Archive{}.tensor("nope"), ParseError);
}

TEST(Checkpoint, ResumedTrainingMatchesUninterruptedTraining) {
    const auto ds = small_dataset();
    const auto mask = make_mask(ds.size(), 0.2, 3);
    const auto c = small_config();

    Trainer straight(ds, mask, c);
    std::vector<EpochLosses> expect;
    for (int e = 0; e < 4; ++e) expect.push_back(straight.train_epoch());

    Trainer first(ds, mask, c);
    first.train_epoch();
    first.train_epoch();
    std::stringstream saved;
    write_archive(saved, first.to_archive());

    Trainer resumed(ds, mask, c);
    resumed.load(read_archive(saved));
    EXPECT_EQ(resumed.epoch(), 2u);
    for (int e = 2; e < 4; ++e) {
        const EpochLosses l = resumed.train_epoch();
        EXPECT_EQ(l.e1, expect[e].e1);
        EXPECT_EQ(l.g2, expect[e].g2);
        EXPECT_EQ(l.d1, expect[e].d1);
    }
    EXPECT_EQ(resumed.predict(), straight.predict());
    EXPECT_EQ(resumed.counters().generator_updates, straight.counters().generator_updates);
}

TEST(Checkpoint, ConfigMismatchIsRejected) {
    const auto ds = small_dataset();
    const auto mask = MissingMask::complete(ds.size());
    Trainer a(ds, mask, small_config());
    auto other = small_config();
    other.alpha = 0.5;
    Trainer b(ds, mask, other);
    EXPECT_THROW(b.load(a.to_archive()), ParameterError);
}

#include <gtest/gtest.h>

#include <random>

#include "mvgvae/probes.hpp"
#include "mvgvae/synthetic.hpp"

using namespace mvg;

namespace {

// An untrained model over a small synthetic world; probes only need some
// fixed representation.
class ProbeFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    auto wc = SyntheticWorldConfig::defaults();
    wc.n_pairs = 300;
    world_ = std::make_unique<SyntheticWorld>(wc);
    const auto bt = gen_synthetic_bitext(*world_);
    std::vector<Words> sents;
    for (const auto& p : bt.corpus.pairs) {
      sents.push_back(p.src_tokens);
      sents.push_back(p.tgt_tokens);
    }
    bpe_ = std::make_unique<BpeModel>(BpeModel::train(sents, 200, {"l1", "l2"}));
    ModelConfig mc;
    mc.languages = {"l1", "l2"};
    mc.vocab = bpe_->vocab_size();
    mc.d_emb = 16;
    mc.hidden = 16;
    mc.latent.d_sem = 8;
    mc.latent.d_syn = 8;
    params_ = std::make_unique<ModelParams<double>>(ModelParams<double>::init(mc, 3));
  }
  static void TearDownTestSuite() {
    world_.reset();
    bpe_.reset();
    params_.reset();
  }
  static std::unique_ptr<SyntheticWorld> world_;
  static std::unique_ptr<BpeModel> bpe_;
  static std::unique_ptr<ModelParams<double>> params_;
};

std::unique_ptr<SyntheticWorld> ProbeFixture::world_;
std::unique_ptr<BpeModel> ProbeFixture::bpe_;
std::unique_ptr<ModelParams<double>> ProbeFixture::params_;

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Similarity probe

TEST_F(ProbeFixture, StsSelfConsistency) {
  const auto pairs = gen_similarity_pairs(*world_, 200, "l1", 4);
  std::vector<Words> a, b;
  std::vector<double> gold;
  for (const auto& p : pairs) {
    a.push_back(p.a);
    b.push_back(p.b);
    gold.push_back(cosine(sem_encode(*params_, bpe_->encode(p.a, "l1")).mu.transpose(),
                          sem_encode(*params_, bpe_->encode(p.b, "l1")).mu.transpose()));
  }
  const auto r = sts_probe(*params_, *bpe_, a, b, gold, "l1", 1);
  EXPECT_NEAR(r.sem, 1.0, 1e-12);
  EXPECT_EQ(r.delta, r.sem - r.syn);
  EXPECT_NEAR(r.oracle, 1.0, 1e-12);
  EXPECT_FALSE(std::isnan(r.bov));
  EXPECT_EQ(r.n, 200);
  EXPECT_LT(std::abs(r.random), 0.1);
  EXPECT_THROW(sts_probe(*params_, *bpe_, a, b, std::vector<double>(3, 0.5), "l1", 1), Error);
}

TEST_F(ProbeFixture, StsRandomGoldIsUncorrelated) {
  const auto pairs = gen_similarity_pairs(*world_, 1000, "l2", 5);
  std::vector<Words> a, b;
  std::vector<double> gold;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u;
  for (const auto& p : pairs) {
    a.push_back(p.a);
    b.push_back(p.b);
    gold.push_back(u(rng));
  }
  const auto r = sts_probe(*params_, *bpe_, a, b, gold, "l2", 1);
  // Null standard deviation of r is about 1 / sqrt(1000) = 0.032.
  EXPECT_LT(std::abs(r.sem), 0.1);
  EXPECT_LT(std::abs(r.syn), 0.1);
  EXPECT_LT(std::abs(r.random), 0.1);
}

TEST(SimilarityReport, FieldsAndSerialization) {
  const Eigen::MatrixXd ya = gaussian(50, 4, 1), yb = gaussian(50, 4, 2), za = gaussian(50, 4, 3), zb = gaussian(50, 4, 4);
  std::vector<double> gold(50);
  for (int i = 0; i < 50; ++i) gold[i] = cosine(za.row(i), zb.row(i));
  const auto r = similarity_report(ya, yb, za, zb, gold, 9);
  EXPECT_NEAR(r.syn, 1.0, 1e-12);
  EXPECT_EQ(r.delta, r.sem - r.syn);
  EXPECT_TRUE(std::isnan(r.bov));
  const auto j = to_json(r);
  for (const char* key : {"schema", "name", "kind", "sem", "syn", "delta", "oracle", "random", "bov", "n", "warnings"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_TRUE(j["bov"].is_null());
  EXPECT_EQ(j["kind"], "semantic");
  const std::string csv = probe_csv({r});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "probe,metric,value");
  EXPECT_EQ(csv.find("sts,bov"), std::string::npos);
  EXPECT_NE(csv.find("sts,delta,"), std::string::npos);
  // Same seed, same report.
  EXPECT_EQ(to_json(similarity_report(ya, yb, za, zb, gold, 9)), j);
}

// ---------------------------------------------------------------------------
// Length-stratified syntactic retrieval

TEST(Stratify, DisjointSameLengthAndWarns) {
  std::vector<std::size_t> lengths = {3, 3, 3, 3, 3, 4, 5, 5, 40, 0};
  std::vector<std::string> warnings;
  const auto strata = stratify(lengths, 30, 1, 7, &warnings);
  ASSERT_EQ(strata.size(), 2u);  // lengths 3 and 5
  EXPECT_EQ(warnings.size(), 1u);  // length 4 singleton
  for (const auto& s : strata) {
    EXPECT_EQ(s.queries.size(), 1u);
    for (auto q : s.queries)
      for (auto c : s.candidates) EXPECT_NE(q, c);
    for (auto i : s.queries) EXPECT_EQ(static_cast<int>(lengths[i]), s.length);
    for (auto i : s.candidates) EXPECT_EQ(static_cast<int>(lengths[i]), s.length);
    EXPECT_EQ(s.queries.size() + s.candidates.size(), s.length == 3 ? 5u : 2u);
  }
}

TEST_F(ProbeFixture, OracleDominatesAndRandomIsBelowModel) {
  const auto data = gen_labeled_sentences(*world_, 600, "l1", 8);
  auto reps = probe_representations(*params_, *bpe_, data.sentences, "l1");
  const SyntaxProbeOptions opt{30, 40, 2};
  const auto res = syntax_probe_from(reps, data.bank, opt);
  for (const auto* r : {&res.pos, &res.f1}) {
    EXPECT_GE(r->oracle, r->sem) << r->name;
    EXPECT_GE(r->oracle, r->syn) << r->name;
    EXPECT_GE(r->oracle, r->bov) << r->name;
    EXPECT_GE(r->oracle, r->random) << r->name;
    EXPECT_EQ(r->delta, r->syn - r->sem);
    EXPECT_LE(r->oracle, 1.0);
    EXPECT_GT(r->n, 0);
  }
  // A representation carrying the gold template retrieves perfectly.
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.gold.size()), 64);
  for (std::size_t i = 0; i < data.gold.size(); ++i) onehot(static_cast<Eigen::Index>(i), data.gold[i].template_id) = 1;
  ProbeRepresentations gold_reps{gaussian(static_cast<int>(data.gold.size()), 8, 3), onehot, {}};
  const auto g = syntax_probe_from(gold_reps, data.bank, opt);
  EXPECT_DOUBLE_EQ(g.pos.syn, 1.0);
  EXPECT_DOUBLE_EQ(g.pos.oracle, 1.0);
  EXPECT_GT(g.pos.syn, g.pos.random);
  EXPECT_TRUE(std::isnan(g.pos.bov));
  // Noise representations sit at the Random level, within sampling error.
  EXPECT_NEAR(g.pos.sem, g.pos.random, 0.1);
}

TEST_F(ProbeFixture, RandomPosMatchesTemplateExpectation) {
  const auto data = gen_labeled_sentences(*world_, 800, "l2", 9);
  const SyntaxProbeOptions opt{30, 60, 4};
  const auto reps = probe_representations(*params_, *bpe_, data.sentences, "l2");
  const auto res = syntax_probe_from(reps, data.bank, opt);

  // Template-level POS agreement: a sentence's POS sequence is fixed by its template.
  std::map<int, std::vector<std::string>> tpl_pos;
  for (int t : world_->templates_of(world_->lang_index("l2"))) tpl_pos[t] = make_bank_entry(world_->render(0, t)).pos;
  std::vector<std::size_t> lengths;
  for (const auto& e : data.bank.entries) lengths.push_back(e.tokens.size());
  const auto strata = stratify(lengths, opt.max_length, opt.per_length, opt.seed, nullptr);
  double expect = 0, var = 0;
  long n = 0;
  for (const auto& s : strata) {
    std::map<int, int> counts;
    for (auto c : s.candidates) ++counts[data.gold[c].template_id];
    for (auto q : s.queries) {
      const auto& qp = tpl_pos[data.gold[q].template_id];
      double m = 0, m2 = 0;
      for (const auto& [t, k] : counts) {
        const auto& cp = tpl_pos[t];
        ASSERT_EQ(cp.size(), qp.size());
        double hit = 0;
        for (std::size_t i = 0; i < qp.size(); ++i) hit += qp[i] == cp[i];
        const double acc = hit / static_cast<double>(qp.size());
        const double w = static_cast<double>(k) / static_cast<double>(s.candidates.size());
        m += w * acc;
        m2 += w * acc * acc;
      }
      expect += m;
      var += m2 - m * m;
      ++n;
    }
  }
  expect /= static_cast<double>(n);
  const double sigma = std::sqrt(var / (static_cast<double>(kRandomRuns) * static_cast<double>(n) * static_cast<double>(n)));
  ASSERT_GT(sigma, 0.0);
  EXPECT_LE(std::abs(res.pos.random - expect), 3 * sigma) << "expected " << expect << " sigma " << sigma;
}

TEST_F(ProbeFixture, DeterministicGivenSeed) {
  const auto data = gen_labeled_sentences(*world_, 300, "l1", 10);
  const auto reps = probe_representations(*params_, *bpe_, data.sentences, "l1");
  const auto a = syntax_probe_from(reps, data.bank, {30, 20, 5});
  const auto b = syntax_probe_from(reps, data.bank, {30, 20, 5});
  EXPECT_EQ(to_json(a.pos), to_json(b.pos));
  EXPECT_EQ(to_json(a.f1), to_json(b.f1));
  const auto c = syntax_probe(*params_, *bpe_, data.bank, {30, 20, 5});
  EXPECT_EQ(to_json(c.pos), to_json(a.pos));
}

// ---------------------------------------------------------------------------
// Whole-pool label retrieval

TEST(LabelRetrieval, HandCase) {
  // Rows 0/1 and 2/3 are near-duplicates; labels agree for 0/1 only.
  Eigen::MatrixXd rep(5, 2);
  rep << 1, 0, 0.99, 0.1, 0, 1, 0.1, 0.99, -1, -1;
  ProbeRepresentations reps{rep, -rep, {}};
  const std::vector<long> labels = {7, 7, 8, 9, 8};
  const auto r = label_retrieval_from(reps, labels, "frame_retrieval", ProbeKind::semantic, 0, 1);
  // Neighbours: 0->1 hit, 1->0 hit, 2->3 miss, 3->2 miss, 4->0 miss (tie with 2, lower index wins).
  EXPECT_EQ(r.n, 5);
  EXPECT_NEAR(r.sem, 2.0 / 5, 1e-12);
  EXPECT_NEAR(r.oracle, 4.0 / 5, 1e-12);  // label 9 has no partner
  EXPECT_EQ(r.delta, r.sem - r.syn);
  EXPECT_THROW(label_retrieval_from(reps, {1}, "x", ProbeKind::semantic, 0, 1), Error);
}

TEST(LabelRetrieval, RandomMatchesBernoulliRate) {
  // F frames x T templates, every pair present: a uniform other sentence shares
  // the frame with probability (T - 1) / (F T - 1).
  const int F = 40, T = 5;
  std::vector<long> frames;
  for (int f = 0; f < F; ++f)
    for (int t = 0; t < T; ++t) frames.push_back(f);
  const Eigen::MatrixXd rep = gaussian(F * T, 4, 11);
  const auto r = label_retrieval_from({rep, rep, {}}, frames, "frame_retrieval", ProbeKind::semantic, 0, 12);
  const double p = static_cast<double>(T - 1) / (F * T - 1);
  const double sigma = std::sqrt(p * (1 - p) / (kRandomRuns * static_cast<double>(F * T)));
  EXPECT_LE(std::abs(r.random - p), 3 * sigma);
  EXPECT_DOUBLE_EQ(r.oracle, 1.0);
}

TEST_F(ProbeFixture, TemplateRetrievalUsesPosIdentity) {
  const auto grid = gen_frame_grid(*world_, 30, "l1", 13);
  const auto reps = probe_representations(*params_, *bpe_, grid.sentences, "l1");
  const auto r = template_retrieval_from(reps, grid.bank, 0, 2);
  EXPECT_EQ(r.name, "template_retrieval");
  EXPECT_EQ(r.kind, ProbeKind::syntactic);
  EXPECT_DOUBLE_EQ(r.oracle, 1.0);
  EXPECT_GE(r.oracle, r.syn);
  // Templates of the default world have distinct POS sequences, so this is
  // template-label retrieval.
  std::vector<long> tpl;
  for (const auto& g : grid.gold) tpl.push_back(g.template_id);
  const auto by_tpl = label_retrieval_from(reps, tpl, "template_retrieval", ProbeKind::syntactic, 0, 2);
  EXPECT_EQ(to_json(by_tpl), to_json(r));
  const auto f = frame_retrieval_from(reps, std::vector<long>(tpl.size(), 1), 0, 2);
  EXPECT_DOUBLE_EQ(f.sem, 1.0);
  EXPECT_DOUBLE_EQ(f.random, 1.0);
}

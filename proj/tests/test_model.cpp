#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "macrokin/model.hpp"
#include "support/fixtures.hpp"

using namespace macrokin;
using macrokin::fixture::ehrenfest;
using macrokin::fixture::lotka_volterra;

namespace {

constexpr const char* kEhrenfest = R"(# two stones
species A B
scale M=100
reaction K=1.0 : A -> B
reaction K=1.0 : B -> A
init A=100 B=0
)";

}  // namespace

TEST(ParseModel, Ehrenfest) {
  const auto m = parse_model(kEhrenfest);
  const auto& net = m.network;
  ASSERT_EQ(net.num_species(), 2u);
  ASSERT_EQ(net.num_reactions(), 2u);
  EXPECT_EQ(net.scale(), 100);
  EXPECT_EQ(net.reaction(0).alpha, (Stoich{1, 0}));
  EXPECT_EQ(net.reaction(0).beta, (Stoich{0, 1}));
  EXPECT_EQ(net.reaction(1).alpha, (Stoich{0, 1}));
  EXPECT_EQ(net.reaction(1).beta, (Stoich{1, 0}));
  EXPECT_EQ(net.reaction(0).rate_constant, 1.0);
  EXPECT_EQ(m.init, (State{100, 0}));
}

TEST(ParseModel, EmptyReactionListIsStatic) {
  const auto m = parse_model("species A B\nscale M=5\ninit A=2\n");
  EXPECT_EQ(m.network.num_reactions(), 0u);
  EXPECT_EQ(m.init, (State{2, 0}));
}

TEST(ParseModel, MultiplicitiesAndEmptyComplex) {
  const auto net = parse_network("species A B C\nreaction K=0.5 : 2 A + B -> 0\nreaction K=2 : 0 -> 3C\n");
  EXPECT_EQ(net.reaction(0).alpha, (Stoich{2, 1, 0}));
  EXPECT_EQ(net.reaction(0).beta, (Stoich{0, 0, 0}));
  EXPECT_EQ(net.reaction(1).beta, (Stoich{0, 0, 3}));
  EXPECT_EQ(net.scale(), 1);
}

TEST(ParseModel, Utf8SpeciesNames) {
  const auto net = parse_network("species Ж X\nreaction K=1 : Ж -> 2 Ж\nreaction K=1 : Ж + X -> 2 X\nreaction K=1 : X -> 0\n");
  EXPECT_EQ(net.species()[0], "Ж");
  EXPECT_EQ(net.reaction(1).alpha, (Stoich{1, 1}));
}

TEST(ParseModel, Errors) {
  auto line_of = [](const char* text) -> std::size_t {
    try {
      parse_model(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 999;
  };
  EXPECT_EQ(line_of("species A\nreaction K=1 : A -> A\n"), 2u);          // no-op
  EXPECT_EQ(line_of("species A\nreaction K=1 : A -> B\n"), 2u);          // unknown species
  EXPECT_EQ(line_of("species A B\n\nreaction K=-1 : A -> B\n"), 3u);     // negative K
  EXPECT_EQ(line_of("species A A\n"), 1u);                               // duplicate
  EXPECT_EQ(line_of("species A\nscale M=0\n"), 2u);
  EXPECT_EQ(line_of("species A\nreaction K=1 A -> 0\n"), 2u);            // missing ':'
  EXPECT_EQ(line_of("species A\nreaction K=1 : A 0\n"), 2u);             // missing arrow
  EXPECT_EQ(line_of("species A\nbogus\n"), 2u);
  EXPECT_EQ(line_of("species A\ninit A=-3\n"), 2u);
  EXPECT_EQ(line_of("reaction K=1 : A -> 0\n"), 1u);
  EXPECT_THROW(parse_model("# nothing\n"), ParseError);
}

TEST(ParseModel, RenderRoundTripOnRandomNetworks) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t ns = 1 + trial % 4;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < ns; ++i) names.push_back("S" + std::to_string(i));
    std::vector<Reaction> rx;
    std::uniform_real_distribution<double> kd(0.0, 10.0);
    for (int r = 0; r < trial % 6; ++r) {
      auto a = fixture::random_complex(rng, ns, 3), b = fixture::random_complex(rng, ns, 3);
      if (a == b) continue;
      rx.push_back({a, b, kd(rng)});
    }
    Network net(names, rx, 1 + trial);
    State init(std::vector<std::int64_t>(ns, trial));
    const auto back = parse_model(render_model(net, init));
    EXPECT_EQ(back.network, net);
    EXPECT_EQ(back.init, init);
  }
}

TEST(Intensity, EhrenfestIsLambdaTimesCount) {
  const auto net = ehrenfest(10, 1.0);
  EXPECT_DOUBLE_EQ(intensity(net, State{3, 7}, 0), 3.0);
  EXPECT_DOUBLE_EQ(intensity(net, State{3, 7}, 1), 7.0);
}

TEST(Intensity, ZeroWhenReactantsMissing) {
  const Network net({"A", "B"}, {{{2, 1}, {0, 0}, 3.0}}, 4);
  EXPECT_EQ(intensity(net, State{1, 5}, 0), 0.0);
  EXPECT_EQ(intensity(net, State{4, 0}, 0), 0.0);
  // 4*3*2 * 3 * 4^(1-3)
  EXPECT_DOUBLE_EQ(intensity(net, State{4, 2}, 0), 4.0 * 3.0 * 2.0 * 3.0 / 16.0);
}

TEST(Intensity, LotkaVolterraPredation) {
  const double k2 = 0.7;
  const auto net = lotka_volterra(1.0, k2, 1.0, 100);
  EXPECT_DOUBLE_EQ(intensity(net, State{30, 20}, 1), k2 * 30 * 20 / 100.0);
  // Birth reaction has order 1: no M factor.
  EXPECT_DOUBLE_EQ(intensity(net, State{30, 20}, 0), 30.0);
}

TEST(Intensity, MonotoneInReactantCounts) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Stoich a = fixture::random_complex(rng, 3, 4);
    Stoich b = a;
    b[0] += 1;
    const Network net({"A", "B", "C"}, {{a, b, 1.3}}, 7);
    std::uniform_int_distribution<int> nd(0, 8);
    State n{nd(rng), nd(rng), nd(rng)};
    for (std::size_t i = 0; i < 3; ++i) {
      if (a[i] == 0) continue;
      State up = n;
      up[i] += 1;
      EXPECT_LE(intensity(net, n, 0), intensity(net, up, 0));
    }
  }
}

TEST(ConservationBasis, EhrenfestSingleLaw) {
  const auto basis = conservation_basis(ehrenfest(10));
  ASSERT_EQ(basis.rank(), 1u);
  EXPECT_EQ(basis.rows[0], (std::vector<std::int64_t>{1, 1}));
}

TEST(ConservationBasis, LotkaVolterraHasNone) {
  EXPECT_EQ(conservation_basis(lotka_volterra(1, 1, 1)).rank(), 0u);
}

TEST(ConservationBasis, NoReactionsGivesIdentity) {
  const auto basis = conservation_basis(Network({"A", "B", "C"}, {}, 1));
  ASSERT_EQ(basis.rank(), 3u);
  EXPECT_EQ(basis.rows[0], (std::vector<std::int64_t>{1, 0, 0}));
  EXPECT_EQ(basis.rows[1], (std::vector<std::int64_t>{0, 1, 0}));
  EXPECT_EQ(basis.rows[2], (std::vector<std::int64_t>{0, 0, 1}));
}

TEST(ConservationBasis, FractionalRowsArePrimitive) {
  // 2A -> 3B conserves 3A + 2B.
  const auto basis = conservation_basis(Network({"A", "B"}, {{{2, 0}, {0, 3}, 1.0}}, 1));
  ASSERT_EQ(basis.rank(), 1u);
  EXPECT_EQ(basis.rows[0], (std::vector<std::int64_t>{3, 2}));
}

TEST(ConservationBasis, RandomNetworksOrthogonalPrimitiveAndComplete) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t ns = 2 + trial % 4;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < ns; ++i) names.push_back("S" + std::to_string(i));
    std::vector<Reaction> rx;
    for (int r = 0; r < 1 + trial % 4; ++r) {
      auto a = fixture::random_complex(rng, ns, 3), b = fixture::random_complex(rng, ns, 3);
      if (a != b) rx.push_back({a, b, 1.0});
    }
    const Network net(names, rx, 1);
    const auto basis = conservation_basis(net);
    for (const auto& mu : basis.rows) {
      for (const auto& r : net.reactions()) {
        std::int64_t dot = 0;
        for (std::size_t i = 0; i < ns; ++i) dot += mu[i] * (r.beta[i] - r.alpha[i]);
        EXPECT_EQ(dot, 0);
      }
      std::int64_t g = 0;
      for (auto v : mu) g = std::gcd(g, std::abs(v));
      EXPECT_EQ(g, 1);
      auto first = std::find_if(mu.begin(), mu.end(), [](auto v) { return v != 0; });
      ASSERT_NE(first, mu.end());
      EXPECT_GT(*first, 0);
    }
    // Rank-nullity against a floating SVD of the stoichiometric matrix.
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(rx.size()));
    for (std::size_t r = 0; r < rx.size(); ++r)
      for (std::size_t i = 0; i < ns; ++i) s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = rx[r].beta[i] - rx[r].alpha[i];
    const auto rank_s = rx.empty() ? 0 : Eigen::FullPivLU<Eigen::MatrixXd>(s).rank();
    EXPECT_EQ(basis.rank(), ns - static_cast<std::size_t>(rank_s));
    EXPECT_EQ(exact::rank(basis.rows, ns), basis.rank());
  }
}

TEST(InvariantValues, Examples) {
  const auto basis = conservation_basis(ehrenfest(10));
  EXPECT_EQ(invariant_values(basis, State{10, 0}), (std::vector<double>{10.0}));
  EXPECT_EQ(invariant_values(basis, State{3, 4}), (std::vector<double>{7.0}));
  EXPECT_TRUE(invariant_values(conservation_basis(lotka_volterra(1, 1, 1)), State{3, 4}).empty());
  EXPECT_THROW(invariant_values(basis, State{1, 2, 3}), std::invalid_argument);
}

TEST(BoundaryTrap, LotkaVolterraExtinctionFaces) {
  const auto net = lotka_volterra(1, 1, 1);
  EXPECT_TRUE(trapped_on_boundary(net, State{5, 0}));
  EXPECT_TRUE(trapped_on_boundary(net, State{0, 5}));
  EXPECT_TRUE(trapped_on_boundary(net, State{0, 0}));
  EXPECT_FALSE(trapped_on_boundary(net, State{1, 1}));
  // Ehrenfest: an empty stone refills.
  EXPECT_FALSE(trapped_on_boundary(ehrenfest(5), State{5, 0}));
}

TEST(NetworkInvariants, RejectsBadInput) {
  EXPECT_THROW(Network({}, {}, 1), std::invalid_argument);
  EXPECT_THROW(Network({"A", "A"}, {}, 1), std::invalid_argument);
  EXPECT_THROW(Network({"A"}, {}, 0), std::invalid_argument);
  EXPECT_THROW(Network({"A"}, {{{1}, {1}, 1.0}}, 1), std::invalid_argument);
  EXPECT_THROW(Network({"A"}, {{{1}, {0}, -1.0}}, 1), std::invalid_argument);
  EXPECT_NO_THROW(Network({"A"}, {{{1}, {0}, 0.0}}, 1));
}

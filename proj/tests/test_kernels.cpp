#include <doctest.h>

#include <cmath>
#include <numeric>

#include "efemb/kernels.hpp"
#include "support.hpp"

using namespace efemb;
using namespace efemb::testing;

namespace {

std::vector<WeightedTerm> all_terms(const Problem& p) {
    std::vector<WeightedTerm> w;
    for (std::uint32_t i = 0; i < p.terms().size(); ++i) w.push_back({i, 1.0});
    return w;
}

}  // namespace

TEST_CASE("problem terms: every cell for counts, stored cells otherwise") {
    Instance g = make_instance(Family::Gaussian, 1, 5, 6, 2, 0.0);
    const Problem pg = Problem::build(g.data, g.ctx, g.family, g.sharing);
    CHECK(pg.terms().size() == g.data.n_stored());
    CHECK(pg.zero_terms().size() + pg.nonzero_terms().size() == pg.terms().size());

    Instance c = make_instance(Family::Poisson, 1, 5, 6, 2, 0.0);
    const Problem pc = Problem::build(c.data, c.ctx, c.family, c.sharing);
    CHECK(pc.terms().size() == 30);
    CHECK(pc.nonzero_terms().size() == c.data.n_stored());

    Instance t = make_instance(Family::Categorical, 1, 4, 9, 2, 0.0);
    const Problem pt = Problem::build(t.data, t.ctx, t.family, t.sharing);
    CHECK(pt.terms().size() == 9);
}

TEST_CASE("context size counts zero-valued members but skips missing ones") {
    DataMatrix d(4, 1, false);
    d.set({0, 0}, 1.0);
    d.set({1, 0}, 0.0);
    d.set({2, 0}, 2.0);
    ContextMap::Builder b(4, 1, "m");
    const DataIndex m[] = {{1, 0}, {2, 0}, {3, 0}};
    b.push(m);
    b.push({});
    b.push({});
    b.push({});
    const ContextMap ctx = b.finish();
    FamilySpec f;
    f.link = LinkSpec::ContextMeanIdentity;
    const Problem p = Problem::build(d, ctx, f, SharingScheme::PerRow);
    // Rows 1 and 2 have empty contexts and are excluded under the mean link.
    CHECK(p.excluded() == 2);
    REQUIRE(p.terms().size() == 1);
    const Term& t = p.terms()[0];
    CHECK(t.ctx_size == 2);
    CHECK(t.ctx_scale == 0.5);
    CHECK(p.context(t).size() == 1);
}

TEST_CASE("linear predictor matches natural parameter") {
    for (Family f : all_families()) {
        if (f == Family::Categorical) continue;
        for (bool mean : {false, true}) {
            const Instance in = make_instance(f, 9, 5, 6, 3, 0.0, mean);
            const Problem p = Problem::build(in.data, in.ctx, in.family, in.sharing);
            const EffectiveParams eff(in.bank, in.sharing);
            for (const Term& t : p.terms()) {
                double eta = natural_parameter(t.index, in.data, in.ctx, in.bank, in.sharing, in.family.link);
                const double s = linear_predictor(p, t, eff);
                if (is_log_link(in.family.link)) eta = std::exp(eta);
                CHECK(s == doctest::Approx(eta).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("kernel gradients match the closed forms") {
    for (Family f : all_families()) {
        for (bool mean : {false, true}) {
            if (mean && f == Family::Categorical) continue;
            for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                const Instance in = make_instance(f, 300 + seed, 6, 7, 3, 0.5, mean);
                const Comparison c = compare(kernel_gradient(in), reference_gradient(in), 1e-10, 1e-12);
                INFO(in.name);
                CHECK(c.ok);
            }
        }
    }
}

TEST_CASE("serial and parallel accumulation agree") {
    for (Family f : all_families()) {
        const Instance in = make_instance(f, 17, 6, 40, 3, 0.0);
        const Problem p = Problem::build(in.data, in.ctx, in.family, in.sharing);
        const EffectiveParams eff(in.bank, in.sharing);
        const auto terms = all_terms(p);
        GradientTables s(in.bank), par(in.bank), par2(in.bank);
        ClampCounters cs, cp, cp2;
        const double ls = accumulate_serial(p, eff, terms, s, cs);
        const double lp = accumulate_parallel(p, eff, terms, par, cp, 3);
        accumulate_parallel(p, eff, terms, par2, cp2, 3);
        CHECK(ls == doctest::Approx(lp).epsilon(1e-12));
        CHECK(compare(s, par, 1e-12, 1e-14).ok);
        // Same thread count: bit-identical.
        CHECK(par.rho == par2.rho);
        CHECK(par.alpha == par2.alpha);
        CHECK(loglik_serial(p, eff, terms, cs) == doctest::Approx(ls).epsilon(1e-12));
        CHECK(loglik_parallel(p, eff, terms, cp, 2) == doctest::Approx(ls).epsilon(1e-12));
    }
}

TEST_CASE("term weights scale contributions linearly") {
    const Instance in = make_instance(Family::Poisson, 5, 5, 6, 2, 0.0);
    const Problem p = Problem::build(in.data, in.ctx, in.family, in.sharing);
    const EffectiveParams eff(in.bank, in.sharing);
    auto terms = all_terms(p);
    GradientTables one(in.bank), three(in.bank);
    ClampCounters c;
    const double l1 = accumulate_serial(p, eff, terms, one, c);
    for (auto& t : terms) t.weight = 3.0;
    const double l3 = accumulate_serial(p, eff, terms, three, c);
    CHECK(l3 == doctest::Approx(3 * l1));
    one *= 3.0;
    CHECK(compare(one, three, 1e-12, 1e-14).ok);
}

TEST_CASE("tied sharing folds the context gradient into rho") {
    Instance in = make_instance(Family::Gaussian, 8, 5, 6, 2, 0.0);
    in.sharing = SharingScheme::Tied;
    in.bank.alpha() = in.bank.rho();
    const Comparison c = compare(kernel_gradient(in), finite_difference(in), 1e-6);
    CHECK(c.ok);
    const GradientTables g = kernel_gradient(in);
    CHECK(g.rho == g.alpha);
}

TEST_CASE("clamp events are counted") {
    DataMatrix d(2, 1, true);
    d.set({0, 0}, 1.0);
    d.set({1, 0}, 1.0);
    const ContextMap ctx = build_basket_context(d);
    EmbeddingBank bank(2, 1, false);
    bank.rho().assign(2, 10.0);
    bank.alpha().assign(2, 10.0);  // eta = 100, beyond the clamp
    FamilySpec f{Family::Poisson, 1.0, LinkSpec::Identity, 0};
    const Problem p = Problem::build(d, ctx, f, SharingScheme::PerRow);
    GradientTables g(bank);
    ClampCounters c;
    accumulate_serial(p, EffectiveParams(bank, SharingScheme::PerRow), all_terms(p), g, c);
    CHECK(c.events == 2);
    CHECK(std::isfinite(g.max_abs()));
}

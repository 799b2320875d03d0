import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowdpath import (Config, ConfigError, CrowdDatabase, DomainError, FrameTransform,
                       ShapeError, Trajectory, build_index, influence, query_top_k, save_db,
                       similarity)
from crowdpath.core import DatabaseStructure
from crowdpath.ingest import read_container
from crowdpath.matching import (BEHIND, FRONT, MatchIndex, central_distance, front_or_behind,
                                linear_scan_top_k, select_representatives)
from helpers import random_query, random_structure
from oracles import scan_top_k

cfg = Config()


def toy(offset=(0.0, 0.0), sid=("t", 0, 0), neighbors=(), f=8):
    xs = np.linspace(0.0, 1.75, f)
    central = Trajectory(np.arange(1, f + 1), np.column_stack([xs, np.full(f, 1.75)]) + offset)
    future = Trajectory(np.arange(f + 1, f + 9), central.xy[-1] + np.outer(np.arange(1, 9), [0.4, 0]))
    return DatabaseStructure(central, tuple(neighbors), (), FrameTransform(), sid, future)


class TestInfluence:
    def test_zero_distance(self):
        for v in (0.05, 0.5, 1.0, 2.7):
            assert influence(v, 0.0, FRONT) == 1.0
            assert influence(v, 0.0, BEHIND) == 1.0

    def test_worked_values(self):
        assert influence(1.0, 1.0, FRONT) == pytest.approx(math.exp(-0.75), abs=1e-12)
        assert influence(1.0, 1.0, FRONT) == pytest.approx(0.4724, abs=5e-5)
        assert influence(1.0, 1.0, BEHIND) == pytest.approx(math.exp(-1.25), abs=1e-12)
        assert influence(1.0, 1.0, BEHIND) == pytest.approx(0.2865, abs=5e-5)

    def test_domain(self):
        with pytest.raises(DomainError):
            influence(0.0, 1.0)
        with pytest.raises(DomainError):
            influence(1.0, -0.1)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(0.05, 3.0), st.floats(0.0, 4.0), st.floats(1e-3, 1.0),
           st.sampled_from([FRONT, BEHIND]))
    def test_decreasing_and_bounded(self, v, d, dd, side):
        a, b = influence(v, d, side), influence(v, d + dd, side)
        assert 0 < b < a <= 1.0

    def test_behind_never_exceeds_front_for_slow_walkers(self):
        # 1/(2v) < v iff v > 1/sqrt(2): for slower agents the behind term is the wider one
        for v in np.linspace(0.8, 3, 20):
            for d in np.linspace(0.1, 3, 20):
                assert influence(v, d, BEHIND) <= influence(v, d, FRONT)


class TestFrontOrBehind:
    def test_cases(self):
        assert front_or_behind((1, 0), (0, 0), (1, 0)) == FRONT
        assert front_or_behind((1, 0), (0, 0), (-1, 0.1)) == BEHIND
        assert front_or_behind((1, 0), (0, 0), (0, 2)) == FRONT
        assert front_or_behind(None, (0, 0), (-1, 0)) == FRONT


class TestCentralDistance:
    def test_identity_and_shift(self):
        a = toy()
        assert central_distance(a, a) == 0.0
        assert central_distance(a, toy((1.0, 0.0))) == pytest.approx(1.0, abs=1e-12)

    def test_metric_on_random_triples(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            xs = [Trajectory(np.arange(1, 9), rng.normal(size=(8, 2))) for _ in range(3)]
            a, b, c = (DatabaseStructure(x, (), (), FrameTransform(), ("t", 0, 0), x) for x in xs)
            ab, bc, ac = central_distance(a, b), central_distance(b, c), central_distance(a, c)
            assert ab == central_distance(b, a)
            assert ac <= ab + bc + 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            central_distance(toy(f=8), toy(f=6))


class TestSimilarity:
    def test_identical_structures(self):
        rng = np.random.default_rng(4)
        for i in range(20):
            s = random_structure(rng, cfg, ("r", i, 0))
            assert similarity(s.as_query(), s, cfg) == pytest.approx(10.0, abs=1e-12)

    def test_empty_surroundings(self):
        assert similarity(toy(), toy(), cfg) == 10.0

    def test_one_sided_neighbor(self):
        nb = Trajectory(np.arange(1, 9), np.column_stack([np.linspace(1, 3, 8), np.full(8, 2.5)]))
        q = toy(neighbors=(nb,))
        assert similarity(q, toy(), cfg) == pytest.approx(6.5, abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(6)
        for i in range(100):
            a, b = random_structure(rng, cfg, ("a", i, 0)), random_structure(rng, cfg, ("b", i, 0))
            assert 0.0 <= similarity(a.as_query(), b, cfg) <= 10.0


class TestRepresentatives:
    def test_two_of_two(self):
        db = CrowdDatabase((toy(sid=("t", 0, 0)), toy((0, 1), sid=("t", 1, 0))), cfg)
        assert sorted(select_representatives(db, 2)) == [0, 1]

    def test_collinear_picks_extremes(self):
        db = CrowdDatabase(tuple(toy((0, y), sid=("t", i, 0)) for i, y in enumerate((0.0, 1.0, 3.0))), cfg)
        assert sorted(select_representatives(db, 2)) == [0, 2]

    def test_invalid_count(self):
        db = CrowdDatabase((toy(),), cfg)
        with pytest.raises(ConfigError):
            select_representatives(db, 0)
        with pytest.raises(ConfigError):
            select_representatives(db, 2)

    def test_deterministic(self, database):
        assert select_representatives(database, 28, seed=3) == select_representatives(database, 28, seed=3)

    def test_spread_exceeds_median_distance(self, database):
        reps = select_representatives(database, 28, seed=0)
        stacked = np.stack([s.central_history.xy for s in database.structures])

        def pairwise(xy):
            diff = xy[:, None] - xy[None]
            d = np.mean(np.sqrt((diff ** 2).sum(axis=-1)), axis=-1)
            return d[np.triu_indices(len(xy), 1)]

        pick = np.random.default_rng(0).choice(len(database), 600, replace=False)
        assert pairwise(stacked[reps]).min() >= np.median(pairwise(stacked[pick]))


class TestIndex:
    def test_single_tree(self):
        db = CrowdDatabase(tuple(toy((0, y), sid=("t", i, 0)) for i, y in enumerate((0.0, 0.5, 1.0))), cfg)
        idx = build_index(db, representatives=[0])
        assert idx.tree_sizes() == [2]
        keys, members = idx.trees[0]
        assert keys.tolist() == pytest.approx([0.5, 1.0]) and members.tolist() == [1, 2]

    def test_equidistant_member_goes_to_first_representative(self):
        db = CrowdDatabase((toy((0, -1), sid=("t", 0, 0)), toy((0, 1), sid=("t", 1, 0)),
                            toy((0, 0), sid=("t", 2, 0))), cfg)
        idx = build_index(db, representatives=[1, 0])
        assert idx.tree_sizes() == [1, 0]

    def test_invariants(self, database):
        idx = build_index(database)
        assert len(idx.representatives) == cfg.m_rep
        seen = list(idx.representatives)
        for keys, members in idx.trees:
            assert np.all(np.diff(keys) >= 0)
            seen.extend(members.tolist())
        assert sorted(seen) == list(range(len(database)))

    def test_exact_match_found(self, database):
        idx = build_index(database)
        for i in (0, 17, 999, len(database) - 1):
            s = database.structures[i]
            (c,), stats = query_top_k(idx, s.as_query(), 1, cfg.delta)
            assert c.similarity == 10.0
            assert c.structure.source_id == s.source_id
            assert stats.exact_evaluations <= stats.visited <= stats.total

    def test_pruning_soundness(self, database):
        rng = np.random.default_rng(8)
        idx = build_index(database)
        radius = cfg.delta * cfg.key_unit
        stacked = idx._stacked
        for _ in range(30):
            q = database.structures[int(rng.integers(len(database)))].as_query()
            qxy = q.central_history.xy + rng.normal(0, 0.05, (cfg.f_obs, 2))
            d = np.mean(np.hypot(*(stacked - qxy).transpose(2, 0, 1)), axis=1)
            eta = np.mean(np.hypot(*(stacked[idx.representatives] - qxy).transpose(2, 0, 1)), axis=1)
            for r, (keys, members) in enumerate(idx.trees):
                close = d[members] <= radius
                assert np.all(np.abs(keys[close] - eta[r]) <= radius + 1e-9)

    def test_top_k_equals_scan_over_visited_set(self, database):
        rng = np.random.default_rng(9)
        sub = CrowdDatabase(tuple(database.structures[i] for i in np.sort(rng.choice(len(database), 600, replace=False))), cfg)
        idx = build_index(sub)
        for _ in range(15):
            q = random_query(rng, cfg)
            cands, stats = query_top_k(idx, q, 3, cfg.delta)
            radius = cfg.delta * cfg.key_unit
            eta = [central_distance(q, sub.structures[r]) for r in idx.representatives]
            visited = list(idx.representatives)
            for r, (keys, members) in enumerate(idx.trees):
                visited += [int(m) for k, m in zip(keys, members) if abs(k - eta[r]) <= radius + 1e-9]
            assert len(visited) == stats.visited
            scores = [similarity(q, sub.structures[i], cfg) for i in visited]
            sids = [sub.structures[i].source_id for i in visited]
            best = [visited[j] for j in scan_top_k(scores, sids, 3)]
            assert [c.db_index for c in cands] == best

    def test_infinite_delta_with_ties(self):
        rng = np.random.default_rng(10)
        base = [random_structure(rng, cfg, ("r", i, 0)) for i in range(60)]
        dupes = [DatabaseStructure(s.central_history, s.neighbors, s.obstacles, s.transform,
                                   ("a", 99 - i, 5), s.future) for i, s in enumerate(base[:20])]
        db = CrowdDatabase(tuple(base + dupes), cfg)
        idx = build_index(db, config=cfg.replace(m_rep=8))
        for i in range(40):
            q = db.structures[i].as_query() if i % 2 else random_query(rng, cfg)
            got, _ = query_top_k(idx, q, 5, math.inf)
            ref = linear_scan_top_k(db.structures, q, 5, idx.config)
            assert [(c.db_index, c.similarity) for c in got] == [(c.db_index, c.similarity) for c in ref]

    def test_empty_db_and_bad_args(self):
        idx = MatchIndex(CrowdDatabase((), cfg), [], [], cfg)
        assert query_top_k(idx, toy(), 3, 2.0) == ([], query_top_k(idx, toy(), 3, 2.0)[1])
        with pytest.raises(ConfigError):
            query_top_k(idx, toy(), 0, 2.0)
        with pytest.raises(ConfigError):
            query_top_k(idx, toy(), 1, 0.0)

    def test_serialisation(self, database):
        idx = build_index(database, seed=5)
        buf = io.BytesIO()
        save_db(database, buf, idx)
        _, _, payload = read_container(io.BytesIO(buf.getvalue()))
        back = MatchIndex.from_bytes(database, payload)
        assert back.representatives == idx.representatives and back.seed == 5
        for (k1, m1), (k2, m2) in zip(idx.trees, back.trees):
            assert np.array_equal(k1, k2) and np.array_equal(m1, m2)

"""Authorization layer: digests, signature stores, commitments, reveals."""

import pytest

from graftsim.witness import (
    CommitmentSet,
    EDGE,
    IMPLICIT,
    Reveal,
    SignatureStore,
    check_reveal,
    commit,
    scenario_salt,
    sign,
    tx_digest,
    verify,
)

SALT = scenario_salt(7)
SRC = "ab" * 32


class TestDigests:
    def test_deterministic(self):
        a = tx_digest("T", SALT, ((SRC, 0),), 5, ((10, "A"),))
        b = tx_digest("T", SALT, ((SRC, 0),), 5, ((10, "A"),))
        assert a == b
        assert len(a) == 64 and int(a, 16) >= 0

    @pytest.mark.parametrize("variant", [
        dict(name="U"),
        dict(salt=scenario_salt(8)),
        dict(inputs=((SRC, 1),)),
        dict(inputs=()),
        dict(rel=6),
        dict(outputs=((11, "A"),)),
        dict(outputs=((10, "B"),)),
        dict(outputs=((10, "A"), (0, "B"))),
    ])
    def test_any_field_change_changes_digest(self, variant):
        base = tx_digest("T", SALT, ((SRC, 0),), 5, ((10, "A"),))
        other = tx_digest(
            variant.get("name", "T"),
            variant.get("salt", SALT),
            variant.get("inputs", ((SRC, 0),)),
            variant.get("rel", 5),
            variant.get("outputs", ((10, "A"),)))
        assert other != base

    def test_scoped_salts_differ(self):
        assert scenario_salt(1, "onchain") != scenario_salt(1, "offchain")
        assert scenario_salt(1) != scenario_salt(2)


class TestSignatures:
    def test_verify_binds_to_digest(self):
        sig = sign("A", "00" * 32)
        assert verify(sig, "00" * 32)
        assert not verify(sig, "11" * 32)

    def test_roles_are_distinct_authorizations(self):
        store = SignatureStore()
        store.add(sign("A", "aa", IMPLICIT))
        assert store.has("A", "aa", IMPLICIT)
        assert not store.has("A", "aa", EDGE)
        store.add(sign("A", "aa", EDGE))
        assert store.signers("aa", EDGE) == {"A"}
        assert store.signers("aa", IMPLICIT) == {"A"}

    def test_store_accumulates(self):
        store = SignatureStore()
        for signer in ("A", "B", "C"):
            store.add(sign(signer, "aa"))
        store.add(sign("A", "aa"))  # duplicates collapse
        assert store.signers("aa") == {"A", "B", "C"}
        assert store.signers("bb") == set()


class TestCommitments:
    def test_reveal_round_trip(self):
        commitments = CommitmentSet([("W1", "oracle"), ("SA", "A")], seed=3)
        reveal = commitments.reveal("W1")
        assert check_reveal(reveal)
        assert reveal.commitment.label == "W1"
        assert commitments.owner("SA") == "A"
        assert set(commitments.labels()) == {"SA", "W1"}

    def test_wrong_preimage_fails(self):
        commitments = CommitmentSet([("W1", "oracle")], seed=3)
        reveal = commitments.reveal("W1")
        forged = Reveal(reveal.commitment, reveal.preimage + b"x")
        assert not check_reveal(forged)

    def test_same_seed_reproduces_commitments(self):
        one = CommitmentSet([("W1", "oracle")], seed=5)
        two = CommitmentSet([("W1", "oracle")], seed=5)
        assert one["W1"] == two["W1"]

    def test_different_seed_changes_commitments(self):
        one = CommitmentSet([("W1", "oracle")], seed=5)
        two = CommitmentSet([("W1", "oracle")], seed=6)
        assert one["W1"].hash_hex != two["W1"].hash_hex

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            CommitmentSet([("W1", "oracle"), ("W1", "A")], seed=1)

    def test_commit_binds_owner_and_label(self):
        c = commit("lbl", b"n" * 16, "A")
        assert c.label == "lbl" and c.owner == "A"

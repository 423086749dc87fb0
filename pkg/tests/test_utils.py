# SPDX-License-Identifier: MIT OR Apache-2.0
# This file is dual licensed under the terms of the Apache License, Version
# 2.0, and the MIT License.  See the LICENSE file in the root of this
# repository for complete details.

import numpy as np
import pytest

from jacncde._utils import canonical_json, config_hash, philox


class TestCanonicalJson:
    def test_sorted_and_compact(self):
        """
        Keys are sorted and there's no insignificant whitespace.
        """
        assert '{"a":[1,2],"b":{"c":null}}' == canonical_json(
            {"b": {"c": None}, "a": (1, 2)}
        )

    def test_numpy(self):
        """
        Arrays and numpy scalars serialize as plain JSON.
        """
        assert '{"x":[1.5,2.0],"y":3}' == canonical_json(
            {"x": np.array([1.5, 2.0]), "y": np.int64(3)}
        )

    def test_unserializable(self):
        """
        Unknown objects raise TypeError naming their type.
        """
        with pytest.raises(TypeError, match="object is not JSON"):
            canonical_json({"x": object()})


class TestConfigHash:
    def test_key_order_irrelevant(self):
        """
        Dictionaries that differ in key order only hash equally.
        """
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})

    def test_sensitive(self):
        """
        Any value change changes the hash.
        """
        assert config_hash({"a": 1}) != config_hash({"a": 1.5})

    def test_sha256_hex(self):
        """
        The hash is a sha256 hex digest.
        """
        h = config_hash({})

        assert 64 == len(h)
        assert (
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
            == h
        )


class TestPhilox:
    def test_seed_wraps(self):
        """
        Negative and oversized seeds are taken modulo 2**64.
        """
        draw = philox(5).random(3).tolist()

        assert draw == philox(5 + 2**64).random(3).tolist()
        assert philox(-1).random(3).tolist() == (
            philox(2**64 - 1).random(3).tolist()
        )
        assert draw != philox(6).random(3).tolist()

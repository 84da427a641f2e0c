from __future__ import annotations

import pytest

from aith.certificate import DelegationCertificate, DelegationLevel, issue
from aith.chain import ChainSet
from aith.crypto import SUITE_SIMULATED_MAC, CryptoProvider, sha256
from aith.policy import AnomalyConfig
from aith.session import Session

T_ISSUE = 1_000_000
T_EXPIRE = 10**10
AGENT_HASH = sha256(b"test-agent-model-weights")


@pytest.fixture
def provider() -> CryptoProvider:
    return CryptoProvider()


@pytest.fixture
def principal(provider):
    return provider.register_secret(sha256(b"test-principal-secret"))


@pytest.fixture
def system_key(provider):
    return provider.register_secret(sha256(b"test-system-secret"))


@pytest.fixture
def cert_factory(provider, principal):
    """Build and sign a certificate; keyword args override the defaults."""

    def make(**kwargs) -> DelegationCertificate:
        fields = dict(
            principal_id="alice",
            principal_pubkey=principal.pubkey,
            suite_id=SUITE_SIMULATED_MAC,
            agent_id="agent-1",
            agent_hash=AGENT_HASH,
            level=DelegationLevel.GENERAL,
            constraints=(),
            triggers=(),
            targets=(),
            t_issue=T_ISSUE,
            t_expire=T_EXPIRE,
        )
        fields.update(kwargs)
        return issue(DelegationCertificate(**fields), provider, principal.secret)

    return make


@pytest.fixture
def session_factory(provider, system_key, cert_factory):
    def make(cert=None, now=T_ISSUE, anomaly=None, level_table=None, **cert_kwargs):
        cert = cert or cert_factory(**cert_kwargs)
        chains = ChainSet()
        session = Session(
            cert, provider, chains, system_key, now,
            level_table=level_table,
            anomaly=anomaly or AnomalyConfig(reset_interval_seconds=10**9),
        )
        session.install(now)
        return session

    return make

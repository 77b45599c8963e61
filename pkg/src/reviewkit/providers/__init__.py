from .base import Provider, ProviderRequest, validate_response
from .mock import MockProvider
from .remote import RemoteProvider
from .rules import MockRuleTable, Rule, RuleMatch

__all__ = [
    "Provider",
    "ProviderRequest",
    "validate_response",
    "MockProvider",
    "RemoteProvider",
    "MockRuleTable",
    "Rule",
    "RuleMatch",
]


def build_provider(config) -> Provider:
    """Instantiate the provider named by an EngineConfig."""
    if config.provider == "mock":
        table = (MockRuleTable.from_file(config.rule_table_path)
                 if config.rule_table_path else MockRuleTable.default())
        return MockProvider(table, embedding_dim=config.embedding_dim)
    return RemoteProvider(config.remote_url, timeout=config.provider_timeout)

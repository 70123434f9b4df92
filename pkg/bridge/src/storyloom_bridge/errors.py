class BridgeAssetsError(RuntimeError):
    """Real-model mode was requested but no model assets are configured."""

# the same name as the pytest11 entry point, so an installed copy is not registered twice
pytest_plugins = 'accdecoder.pytest_plugin'

# Core infrastructure module
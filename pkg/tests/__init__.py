# Test package for foba-select

# Test package for plc-disagg

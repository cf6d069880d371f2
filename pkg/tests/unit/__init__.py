# Unit test package for plc-disagg

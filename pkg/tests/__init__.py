# Tests package for Reflective Genera

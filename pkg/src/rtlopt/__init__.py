"""A verified-transform playground for an RTL-style intermediate language.

The pieces: hash-consed integer sets (`hset`), the IR with its text format
(`ir`), a reference interpreter (`interp`), register type inference
(`typecheck`), loop-body duplication with a structural checker (`dup`),
an equation-based redundancy analysis with an inductiveness checker and
rewriter (`cse3`), cleanup passes (`cleanup`), and drivers: `pipeline`,
`difftest`, `cli`, `service`.
"""

__version__ = "0.1.0"

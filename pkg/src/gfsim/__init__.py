"""Grant-free random access with LDPC-column protocol sequences.

Modules: ``seqmat`` (spreading matrices), ``theory`` (closed-form design
models), ``phy`` (transmitter and AWGN channel), ``detect`` (two-stage
receiver), ``sim`` (Monte-Carlo experiments), ``cli``.
"""

__version__ = "0.1.0"

"""Privacy-enhanced pre-registered study platform.

Studies are signed by a researcher, approved by an ethics board after
remote attestation of the trusted core, filled in by participants whose
answers are end-to-end encrypted into the core, stored under
rollback-protected authenticated encryption, and analyzed exactly once
by a pre-approved statistics pipeline.
"""

from peqes.crypto import SUITE_ID

__version__ = "0.1.0"
__all__ = ["SUITE_ID", "__version__"]

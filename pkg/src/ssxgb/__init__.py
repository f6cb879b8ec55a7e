"""Privacy-preserving multi-party gradient tree boosting over vertically
partitioned data.

The package simulates, in one process, a federation of feature-holding
participants plus two non-colluding computation servers: server C
orchestrates training on ciphertexts without any decryption key, server S
holds the master trapdoor and decrypts only masked values.  Training and
prediction run entirely on an additively homomorphic cryptosystem; a
plaintext twin of the pipeline serves as the verification oracle.
"""

__version__ = "0.1.0"

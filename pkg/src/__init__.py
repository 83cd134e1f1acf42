"""
beacon-guard - membership-inference attacks and defenses for genomic summary releases
"""
__version__ = "0.1.0"

#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# fedpet documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

# flake8: noqa
# pylint: disable=invalid-name,no-name-in-module
# pylint: disable=wrong-import-position,missing-docstring,redefined-builtin

import os
import sys

import sphinx_rtd_theme

sys.path.insert(0, os.path.abspath(".."))

from fedpet import __author__, __version__

# -- General configuration ------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.todo",
    "sphinx.ext.coverage",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "fedpet"
copyright = "2024 {}".format(__author__)

version = "v" + __version__
release = version

exclude_patterns = ["_build"]
pygments_style = "default"

# Global substitutions
rst_prolog = "".join(
    [
        # Math
        r"""
.. |alpha| replace:: :math:`\alpha`
.. |K| replace:: :math:`K`
.. |C| replace:: :math:`C`
.. |T| replace:: :math:`T`
.. |E| replace:: :math:`E`
""",
        # Modules
        r"""
.. |accounting| replace:: :mod:`~fedpet.accounting`
.. |attack| replace:: :mod:`~fedpet.attack`
.. |autodiff| replace:: :mod:`~fedpet.autodiff`
.. |checkpoint| replace:: :mod:`~fedpet.checkpoint`
.. |compute.parallel| replace:: :mod:`fedpet.compute.parallel`
.. |conf| replace:: :mod:`~fedpet.conf`
.. |data| replace:: :mod:`~fedpet.data`
.. |delta| replace:: :mod:`~fedpet.delta`
.. |federation| replace:: :mod:`~fedpet.federation`
.. |harness| replace:: :mod:`~fedpet.harness`
.. |models.plan| replace:: :mod:`fedpet.models.plan`
.. |models.records| replace:: :mod:`fedpet.models.records`
.. |partition| replace:: :mod:`~fedpet.partition`
.. |report| replace:: :mod:`~fedpet.report`
""",
        # Classes
        r"""
.. |ArchShape| replace:: :class:`~fedpet.accounting.ArchShape`
.. |AttackConfig| replace:: :class:`~fedpet.attack.AttackConfig`
.. |AttackResult| replace:: :class:`~fedpet.models.records.AttackResult`
.. |Batch| replace:: :class:`~fedpet.data.Batch`
.. |CostReport| replace:: :class:`~fedpet.models.records.CostReport`
.. |DeltaSpec| replace:: :class:`~fedpet.delta.DeltaSpec`
.. |DeltaState| replace:: :class:`~fedpet.delta.DeltaState`
.. |ExperimentConfig| replace:: :class:`~fedpet.harness.ExperimentConfig`
.. |FederationConfig| replace:: :class:`~fedpet.federation.FederationConfig`
.. |GradientMap| replace:: :class:`~fedpet.autodiff.GradientMap`
.. |ModelConfig| replace:: :class:`~fedpet.model.ModelConfig`
.. |OptimizerConfig| replace:: :class:`~fedpet.optim.OptimizerConfig`
.. |ParameterStore| replace:: :class:`~fedpet.model.ParameterStore`
.. |PartitionConfig| replace:: :class:`~fedpet.partition.PartitionConfig`
.. |PartitionPlan| replace:: :class:`~fedpet.models.plan.PartitionPlan`
.. |Payload| replace:: :class:`~fedpet.delta.Payload`
.. |RoundRecord| replace:: :class:`~fedpet.models.records.RoundRecord`
.. |SyntheticSpec| replace:: :class:`~fedpet.data.SyntheticSpec`
.. |Tape| replace:: :class:`~fedpet.autodiff.Tape`
.. |Tensor| replace:: :class:`~fedpet.autodiff.Tensor`
""",
        # Config options
        r"""
.. |PRECISION| replace:: :const:`~fedpet.conf.FedpetConfig.PRECISION`
.. |FLOAT_DTYPE| replace:: :const:`~fedpet.conf.FedpetConfig.FLOAT_DTYPE`
.. |WIRE_BYTES_PER_SCALAR| replace:: :const:`~fedpet.conf.FedpetConfig.WIRE_BYTES_PER_SCALAR`
""",
    ]
)

# -- Options for Napoleon (docstring format extension) --------------------
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_include_private_with_doc = False
napoleon_include_special_with_doc = True
napoleon_use_ivar = False
napoleon_use_param = True
napoleon_use_rtype = True

# -- Options for HTML output ----------------------------------------------

html_theme = "sphinx_rtd_theme"
html_theme_path = [sphinx_rtd_theme.get_html_theme_path()]
html_theme_options = {"navigation_depth": 3}
html_sidebars = {"**": ["localtoc.html"]}
html_title = version + " documentation"
html_last_updated_fmt = "%b %d, %Y"
html_show_sphinx = False
htmlhelp_basename = "fedpetdoc"

# -- Options for LaTeX output ---------------------------------------------

latex_documents = [
    ("index", "fedpet.tex", "fedpet Documentation", __author__, "manual"),
]

# -- Options for manual page output ---------------------------------------

man_pages = [("index", "fedpet", "fedpet Documentation", [__author__], 1)]

# -- Autodoc --------------------------------------------------------------

autodoc_member_order = "bysource"
